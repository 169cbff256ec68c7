//! Camera model: a 2D similarity + shear warp from world coordinates onto the
//! normalized image square, with per-frame jitter and photometric gain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::seed;

/// `image = m * (world - pivot) + pivot + t`, all in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub m: [[f32; 2]; 2],
    pub t: [f32; 2],
}

const PIVOT: [f32; 2] = [0.5, 0.5];

impl Affine {
    pub const IDENTITY: Affine = Affine {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    /// Rotation (radians), isotropic scale, horizontal shear and translation.
    pub fn from_parts(rotation: f32, scale: f32, shear: f32, t: [f32; 2]) -> Self {
        let (s, c) = (libm::sinf(rotation), libm::cosf(rotation));
        // R * S * Shear
        let m = [
            [c * scale, (c * shear - s) * scale],
            [s * scale, (s * shear + c) * scale],
        ];
        Affine { m, t }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Affine) -> Affine {
        let a = &self.m;
        let b = &first.m;
        let m = [
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ];
        let t = [
            a[0][0] * first.t[0] + a[0][1] * first.t[1] + self.t[0],
            a[1][0] * first.t[0] + a[1][1] * first.t[1] + self.t[1],
        ];
        Affine { m, t }
    }

    pub fn apply(&self, p: [f32; 2]) -> [f32; 2] {
        let d = [p[0] - PIVOT[0], p[1] - PIVOT[1]];
        [
            self.m[0][0] * d[0] + self.m[0][1] * d[1] + PIVOT[0] + self.t[0],
            self.m[1][0] * d[0] + self.m[1][1] * d[1] + PIVOT[1] + self.t[1],
        ]
    }

    pub fn inverse(&self) -> Affine {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        let mi = [[d / det, -b / det], [-c / det, a / det]];
        let t = [
            -(mi[0][0] * self.t[0] + mi[0][1] * self.t[1]),
            -(mi[1][0] * self.t[0] + mi[1][1] * self.t[1]),
        ];
        Affine { m: mi, t }
    }
}

/// Per-frame perturbation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Maximum translation, as a fraction of the image width.
    pub translation: f32,
    /// Maximum rotation in degrees.
    pub rotation_deg: f32,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        translation: 0.0,
        rotation_deg: 0.0,
    };
    pub const MAX_TRANSLATION: f32 = 0.05;
    pub const MAX_ROTATION_DEG: f32 = 5.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Photometric {
    pub brightness: f32,
    pub contrast: f32,
    /// Amplitude of per-pixel sensor noise.
    pub noise: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub view_id: usize,
    pub base_transform: Affine,
    pub jitter: Jitter,
    pub jitter_seed: u64,
    pub photometric: Photometric,
    pub noise_seed: u64,
}

impl ViewParams {
    /// The full world-to-image transform for one frame.
    pub fn frame_transform(&self, frame_index: u32) -> Affine {
        if self.jitter.translation == 0.0 && self.jitter.rotation_deg == 0.0 {
            return self.base_transform;
        }
        let mut rng = seed::rng(self.jitter_seed, "jitter", frame_index as u64);
        let rot = rng.random_range(-1.0f32..=1.0) * self.jitter.rotation_deg.to_radians();
        let t = [
            rng.random_range(-1.0f32..=1.0) * self.jitter.translation,
            rng.random_range(-1.0f32..=1.0) * self.jitter.translation,
        ];
        Affine::from_parts(rot, 1.0, 0.0, t).compose(&self.base_transform)
    }
}

/// Ranges of the per-run camera distribution.
struct ViewDistribution {
    rotation_deg: f32,
    scale: (f32, f32),
    shear: f32,
    translation: f32,
}

fn distribution(task: Task) -> ViewDistribution {
    match task {
        Task::Floor => ViewDistribution {
            rotation_deg: 30.0,
            scale: (0.85, 1.05),
            shear: 0.12,
            translation: 0.04,
        },
        Task::Cup => ViewDistribution {
            rotation_deg: 12.0,
            scale: (0.9, 1.1),
            shear: 0.08,
            translation: 0.04,
        },
    }
}

/// Draws a camera from the task's viewpoint distribution. This is the same
/// distribution the training views come from, so the agent uses it for fresh
/// observation viewpoints as well.
pub fn sample_view<R: Rng>(task: Task, view_id: usize, jitter: Jitter, rng: &mut R) -> ViewParams {
    let d = distribution(task);
    let rotation = rng.random_range(-d.rotation_deg..=d.rotation_deg).to_radians();
    let scale = rng.random_range(d.scale.0..=d.scale.1);
    let shear = rng.random_range(-d.shear..=d.shear);
    let t = [
        rng.random_range(-d.translation..=d.translation),
        rng.random_range(-d.translation..=d.translation),
    ];
    ViewParams {
        view_id,
        base_transform: Affine::from_parts(rotation, scale, shear, t),
        jitter,
        jitter_seed: rng.random(),
        photometric: Photometric {
            brightness: rng.random_range(0.85..=1.15),
            contrast: rng.random_range(0.8..=1.2),
            noise: 0.02,
        },
        noise_seed: rng.random(),
    }
}
