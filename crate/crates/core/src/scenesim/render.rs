//! Supersampled rasterizer. Each pixel averages a 2x2 grid of samples that
//! are mapped back into world coordinates through the inverse camera warp.

use alloc::vec;
use alloc::vec::Vec;

use super::{CupScene, FloorObject, FloorScene, Scene, Shape, ViewParams};
use crate::seed::mix;
use crate::Tensor;

/// `[H, W, 3]` RGB image with values in `[0, 1]`.
pub type ImageTensor = Tensor;

const SUBSAMPLES: usize = 2;
const TEXTURE_FREQ: f32 = 18.0;
const STORAGE_COLS: usize = 5;
const STORAGE_ROWS: usize = 3;
const MARKER_SIZE: f32 = 0.05;

fn sq(x: f32) -> f32 {
    x * x
}

fn hash_unit(a: u64, b: u64, c: u64) -> f32 {
    let h = mix(a ^ mix(b ^ mix(c)));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Bilinear value noise in `[-1, 1]`, anchored to world coordinates.
fn value_noise(seed: u64, p: [f32; 2]) -> f32 {
    let (x, y) = (p[0] * TEXTURE_FREQ + 1000.0, p[1] * TEXTURE_FREQ + 1000.0);
    let (x0, y0) = (libm::floorf(x), libm::floorf(y));
    let (fx, fy) = (x - x0, y - y0);
    let (ix, iy) = (x0 as u64, y0 as u64);
    let v = |dx: u64, dy: u64| hash_unit(seed, ix + dx, iy + dy);
    let top = v(0, 0) * (1.0 - fx) + v(1, 0) * fx;
    let bottom = v(0, 1) * (1.0 - fx) + v(1, 1) * fx;
    (top * (1.0 - fy) + bottom * fy) * 2.0 - 1.0
}

fn inside_shape(shape: Shape, size: f32, rotation: f32, center: [f32; 2], p: [f32; 2]) -> bool {
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    let r = size / 2.0;
    if sq(dx) + sq(dy) > sq(r * 1.2) {
        return false;
    }
    let (s, c) = (libm::sinf(rotation), libm::cosf(rotation));
    let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
    match shape {
        Shape::Circle => sq(lx) + sq(ly) <= sq(r),
        Shape::Square => lx.abs() <= r * 0.85 && ly.abs() <= r * 0.85,
        Shape::Triangle => {
            // Equilateral, circumradius 1.2 r: three half-planes at inradius 0.6 r.
            let inr = 0.6 * r;
            let normals = [(0.0f32, 1.0f32), (0.866_025_4, -0.5), (-0.866_025_4, -0.5)];
            normals.iter().all(|&(nx, ny)| lx * nx + ly * ny <= inr)
        }
    }
}

fn storage_slot(scene: &FloorScene, k: usize) -> [f32; 2] {
    let (col, row) = (k % STORAGE_COLS, (k / STORAGE_COLS) % STORAGE_ROWS);
    let a = &scene.storage_area;
    [
        a.min[0] + (col as f32 + 0.5) / STORAGE_COLS as f32 * (a.max[0] - a.min[0]),
        a.min[1] + (row as f32 + 0.5) / STORAGE_ROWS as f32 * (a.max[1] - a.min[1]),
    ]
}

fn shade_floor(scene: &FloorScene, p: [f32; 2]) -> [f32; 3] {
    let n = value_noise(scene.texture_seed, p) * scene.noise_amplitude;
    let mut color = scene.background.map(|c| c + n);
    if scene.storage_area.contains(p) {
        color = scene.storage_color.map(|c| c + 0.5 * n);
        for (k, obj) in scene.storage.iter().enumerate() {
            if inside_shape(obj.shape, MARKER_SIZE, 0.0, storage_slot(scene, k), p) {
                color = obj.color;
            }
        }
    }
    for obj in &scene.objects {
        if object_hit(obj, p) {
            color = obj.color;
        }
    }
    color
}

fn object_hit(obj: &FloorObject, p: [f32; 2]) -> bool {
    inside_shape(obj.shape, obj.size, obj.rotation, obj.position, p)
}

/// Cup outline and particle positions in world coordinates.
struct CupLayout {
    x0: f32,
    y_top: f32,
    height: f32,
    /// Apparent rim half-width and half-height.
    rim_a: f32,
    rim_b: f32,
    particles: Vec<[f32; 2]>,
    grid: ParticleGrid,
}

const CUP_RADIUS: f32 = 0.16;
const CUP_BASE_HEIGHT: f32 = 0.36;
const RIM_ELEVATION: f32 = 0.35;
const TAPER: f32 = 0.25;
const PARTICLE_RADIUS: f32 = 0.021;

impl CupLayout {
    fn new(scene: &CupScene) -> Self {
        let g = scene.cup_geometry;
        let (sy, cy) = (libm::sinf(g.yaw), libm::cosf(g.yaw));
        let rim_a = CUP_RADIUS * libm::sqrtf(sq(cy) + sq(g.rim_scale * sy));
        let rim_b = RIM_ELEVATION * CUP_RADIUS * libm::sqrtf(sq(sy) + sq(g.rim_scale * cy));
        let height = CUP_BASE_HEIGHT * g.height_scale;
        let x0 = 0.5;
        let y_top = 0.55 - height / 2.0;
        let mut layout = CupLayout {
            x0,
            y_top,
            height,
            rim_a,
            rim_b,
            particles: Vec::new(),
            grid: ParticleGrid::default(),
        };
        let n = scene.particle_count as usize;
        let full = super::FULL_CUP as usize;
        layout.particles = (0..n.min(full))
            .map(|i| {
                let u = hash_unit(scene.particle_seed, i as u64, 1) * 2.0 - 1.0;
                let jitter = hash_unit(scene.particle_seed, i as u64, 2);
                // Stratified heights: particle i sits in the i-th slab from the bottom.
                let level = (i as f32 + jitter) / full as f32;
                let t = 1.0 - 0.94 * level;
                let y = y_top + t * layout.height;
                [x0 + u * 0.9 * layout.half_width(t), y]
            })
            .collect();
        layout.grid = ParticleGrid::build(&layout.particles);
        layout
    }

    /// Body half-width at depth fraction `t` (0 at the rim, 1 at the bottom).
    fn half_width(&self, t: f32) -> f32 {
        self.rim_a * (1.0 - TAPER * t)
    }

    fn in_ellipse(&self, p: [f32; 2], cy: f32, a: f32, b: f32) -> bool {
        sq((p[0] - self.x0) / a) + sq((p[1] - cy) / b) <= 1.0
    }

    fn in_body(&self, p: [f32; 2]) -> bool {
        let t = (p[1] - self.y_top) / self.height;
        if (0.0..=1.0).contains(&t) && (p[0] - self.x0).abs() <= self.half_width(t) {
            return true;
        }
        let bottom = 1.0 - TAPER;
        self.in_ellipse(p, self.y_top, self.rim_a, self.rim_b)
            || self.in_ellipse(p, self.y_top + self.height, self.rim_a * bottom, self.rim_b * bottom)
    }

    fn on_rim(&self, p: [f32; 2]) -> bool {
        self.in_ellipse(p, self.y_top, self.rim_a, self.rim_b)
            && !self.in_ellipse(p, self.y_top, self.rim_a * 0.88, self.rim_b * 0.8)
    }
}

/// Uniform bucket grid over particle centers.
#[derive(Default)]
struct ParticleGrid {
    origin: [f32; 2],
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl ParticleGrid {
    const CELL: f32 = 2.0 * PARTICLE_RADIUS;

    fn build(points: &[[f32; 2]]) -> Self {
        if points.is_empty() {
            return Self::default();
        }
        let (mut lo, mut hi) = ([f32::INFINITY; 2], [f32::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let cols = ((hi[0] - lo[0]) / Self::CELL) as usize + 1;
        let rows = ((hi[1] - lo[1]) / Self::CELL) as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        for (i, p) in points.iter().enumerate() {
            let cx = ((p[0] - lo[0]) / Self::CELL) as usize;
            let cy = ((p[1] - lo[1]) / Self::CELL) as usize;
            cells[cy * cols + cx].push(i as u32);
        }
        Self {
            origin: lo,
            cols,
            rows,
            cells,
        }
    }

    fn covers(&self, points: &[[f32; 2]], p: [f32; 2]) -> bool {
        if self.cells.is_empty() {
            return false;
        }
        let fx = libm::floorf((p[0] - self.origin[0]) / Self::CELL) as i64;
        let fy = libm::floorf((p[1] - self.origin[1]) / Self::CELL) as i64;
        for cy in fy - 1..=fy + 1 {
            for cx in fx - 1..=fx + 1 {
                if cx < 0 || cy < 0 || cx >= self.cols as i64 || cy >= self.rows as i64 {
                    continue;
                }
                for &i in &self.cells[cy as usize * self.cols + cx as usize] {
                    let q = points[i as usize];
                    if sq(q[0] - p[0]) + sq(q[1] - p[1]) <= sq(PARTICLE_RADIUS) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

fn blend(under: [f32; 3], over: [f32; 4]) -> [f32; 3] {
    let a = over[3];
    [
        under[0] * (1.0 - a) + over[0] * a,
        under[1] * (1.0 - a) + over[1] * a,
        under[2] * (1.0 - a) + over[2] * a,
    ]
}

fn shade_cup(scene: &CupScene, layout: &CupLayout, p: [f32; 2]) -> [f32; 3] {
    let n = value_noise(scene.texture_seed, p) * 0.04;
    let mut color = scene.background.map(|c| c + n);
    if !layout.in_body(p) {
        return color;
    }
    if layout.grid.covers(&layout.particles, p) {
        color = blend(color, scene.particle_color);
    }
    color = blend(color, scene.cup_color);
    if layout.on_rim(p) {
        let c = scene.cup_color;
        color = blend(color, [c[0] * 0.6, c[1] * 0.6, c[2] * 0.6, 0.85]);
    }
    color
}

/// Renders `scene` through camera `view` at frame `frame_index` into an
/// `size x size` RGB image. Pure in all of its arguments.
pub fn render(scene: &Scene, view: &ViewParams, frame_index: u32, size: usize) -> ImageTensor {
    let inv = view.frame_transform(frame_index).inverse();
    let cup_layout = match scene {
        Scene::Cup(c) => Some(CupLayout::new(c)),
        Scene::Floor(_) => None,
    };
    let ph = view.photometric;
    let mut data = vec![0.0f32; size * size * 3];
    let step = 1.0 / (size * SUBSAMPLES) as f32;
    let norm = 1.0 / (SUBSAMPLES * SUBSAMPLES) as f32;
    for i in 0..size {
        for j in 0..size {
            let mut acc = [0.0f32; 3];
            for sy in 0..SUBSAMPLES {
                for sx in 0..SUBSAMPLES {
                    let img = [
                        ((j * SUBSAMPLES + sx) as f32 + 0.5) * step,
                        ((i * SUBSAMPLES + sy) as f32 + 0.5) * step,
                    ];
                    let world = inv.apply(img);
                    let c = match (scene, &cup_layout) {
                        (Scene::Floor(f), _) => shade_floor(f, world),
                        (Scene::Cup(c), Some(layout)) => shade_cup(c, layout, world),
                        (Scene::Cup(_), None) => unreachable!(),
                    };
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            let pixel = (i * size + j) as u64;
            for k in 0..3 {
                let noise = (hash_unit(view.noise_seed, frame_index as u64, pixel * 3 + k as u64) * 2.0 - 1.0) * ph.noise;
                let v = ((acc[k] * norm - 0.5) * ph.contrast + 0.5) * ph.brightness + noise;
                data[(i * size + j) * 3 + k] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![size, size, 3], data).expect("image buffer matches its shape")
}
