//! Procedural ground-truth worlds and a multi-view rasterizer.
//!
//! Two tasks are modeled. On the floor task a region holds up to 15 objects
//! that are moved one at a time into a storage area; on the cup task a cup
//! holds up to 345 particles and is filled or emptied in quanta of 15. Phase
//! `p` of a run is the ground truth after `p` steps of the demonstration:
//! `15 - p` objects, or `23 * (15 - p)` particles. Appearance (colors, sizes,
//! shapes, cup geometry, viewpoints, lighting) is randomized per run.

mod render;
mod view;

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use render::{render, ImageTensor};
pub use view::{sample_view, Affine, Jitter, Photometric, ViewParams};

use crate::{seed, PHASES, ROBOT_VIEW, VIEWS};

/// Objects on the floor at phase 0.
pub const FLOOR_OBJECTS: usize = 15;
/// Particles in a full cup.
pub const FULL_CUP: u32 = 345;
/// Particles moved by one pour action.
pub const POUR_QUANTUM: u32 = 15;
/// Smallest and largest object extent, as a fraction of the image width.
pub const OBJECT_SIZE: (f32, f32) = (0.04, 0.12);
/// Range of both cup scale factors.
pub const CUP_SCALE: (f32, f32) = (1.0, 1.45);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Floor,
    Cup,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Floor => "floor",
            Task::Cup => "cup",
        }
    }
}

impl core::str::FromStr for Task {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "floor" => Ok(Task::Floor),
            "cup" => Ok(Task::Cup),
            _ => Err(SceneError::UnknownTask),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error("phase {0} is outside 0..=15")]
    PhaseOutOfRange(usize),
    #[error("no object left in the region to remove")]
    RegionEmpty,
    #[error("storage area is empty, nothing to add")]
    StorageEmpty,
    #[error("action does not apply to this task")]
    WrongTask,
    #[error("unknown task name")]
    UnknownTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

/// Axis-aligned rectangle in normalized world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f32; 2],
    pub max: [f32; 2],
}

impl Rect {
    pub fn center(&self) -> [f32; 2] {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn contains(&self, p: [f32; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorObject {
    pub shape: Shape,
    /// Full extent as a fraction of the image width.
    pub size: f32,
    pub color: [f32; 3],
    pub position: [f32; 2],
    pub rotation: f32,
    /// Seeded key that orders objects at equal distance from the region center.
    pub tiebreak: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorScene {
    pub objects: Vec<FloorObject>,
    /// Objects moved out of the region, most recent last.
    pub storage: Vec<FloorObject>,
    pub background: [f32; 3],
    pub noise_amplitude: f32,
    pub texture_seed: u64,
    pub region: Rect,
    pub storage_area: Rect,
    pub storage_color: [f32; 3],
    pub placement_seed: u64,
}

impl FloorScene {
    pub fn storage_count(&self) -> usize {
        self.storage.len()
    }

    /// Objects in the region plus objects in storage; constant under actions.
    pub fn total_objects(&self) -> usize {
        self.objects.len() + self.storage.len()
    }

    /// Index of the object the next removal takes: the one farthest from the
    /// region center, ties broken by the seeded key.
    fn removal_candidate(&self) -> Option<usize> {
        let c = self.region.center();
        let key = |o: &FloorObject| {
            let d = dist2(o.position, c);
            (d, o.tiebreak)
        };
        (0..self.objects.len()).max_by(|&a, &b| {
            let (ka, kb) = (key(&self.objects[a]), key(&self.objects[b]));
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CupGeometry {
    /// Ratio of the rim's principal axes (1 = circular).
    pub rim_scale: f32,
    pub height_scale: f32,
    /// Rotation of the rim's principal axis about the vertical, radians.
    pub yaw: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupScene {
    pub particle_count: u32,
    pub cup_geometry: CupGeometry,
    pub particle_color: [f32; 4],
    pub cup_color: [f32; 4],
    pub background: [f32; 3],
    pub particle_seed: u64,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Scene {
    Floor(FloorScene),
    Cup(CupScene),
}

impl Scene {
    pub fn task(&self) -> Task {
        match self {
            Scene::Floor(_) => Task::Floor,
            Scene::Cup(_) => Task::Cup,
        }
    }

    /// The task-progress quantity: objects in the region, or particles in the cup.
    pub fn ground_truth(&self) -> u32 {
        match self {
            Scene::Floor(s) => s.objects.len() as u32,
            Scene::Cup(s) => s.particle_count,
        }
    }
}

/// A randomized run: the phase-0 scene and its four cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub seed: u64,
    pub scene: Scene,
    pub views: [ViewParams; VIEWS],
}

impl RunSetup {
    pub fn robot_view(&self) -> &ViewParams {
        &self.views[ROBOT_VIEW]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorAction {
    RemoveOne,
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CupAction {
    PourIn,
    PourOut,
}

fn random_color<R: Rng>(rng: &mut R) -> [f32; 3] {
    hsv_to_rgb(
        rng.random_range(0.0..1.0),
        rng.random_range(0.45..1.0),
        rng.random_range(0.45..1.0),
    )
}

fn color_distance(a: [f32; 3], b: [f32; 3]) -> f32 {
    libm::sqrtf((0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum())
}

/// Draws a color at least `min_dist` away from every color in `avoid`.
fn contrasting_color<R: Rng>(rng: &mut R, avoid: &[[f32; 3]], min_dist: f32) -> [f32; 3] {
    loop {
        let c = random_color(rng);
        if avoid.iter().all(|&a| color_distance(a, c) >= min_dist) {
            return c;
        }
    }
}

fn dist2(a: [f32; 2], b: [f32; 2]) -> f32 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

pub(crate) fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h % 1.0;
    let h6 = (if h < 0.0 { h + 1.0 } else { h }) * 6.0;
    let i = libm::floorf(h6) as i32;
    let f = h6 - i as f32;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn random_object<R: Rng>(rng: &mut R, region: &Rect, floor: [f32; 3], storage: [f32; 3]) -> FloorObject {
    let shape = match rng.random_range(0..3) {
        0 => Shape::Circle,
        1 => Shape::Square,
        _ => Shape::Triangle,
    };
    FloorObject {
        shape,
        size: rng.random_range(OBJECT_SIZE.0..=OBJECT_SIZE.1),
        color: contrasting_color(rng, &[floor, storage], 0.35),
        position: [
            rng.random_range(region.min[0]..=region.max[0]),
            rng.random_range(region.min[1]..=region.max[1]),
        ],
        rotation: rng.random_range(0.0..core::f32::consts::TAU),
        tiebreak: rng.random(),
    }
}

fn randomize_floor<R: Rng>(rng: &mut R) -> FloorScene {
    let region = Rect {
        min: [0.22, 0.32],
        max: [0.78, 0.82],
    };
    let storage_area = Rect {
        min: [0.3, 0.1],
        max: [0.7, 0.24],
    };
    let background = hsv_to_rgb(
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..0.35),
        rng.random_range(0.25..0.75),
    );
    let storage_color = contrasting_color(rng, &[background], 0.3);
    let objects = (0..FLOOR_OBJECTS)
        .map(|_| random_object(rng, &region, background, storage_color))
        .collect();
    FloorScene {
        objects,
        storage: Vec::new(),
        background,
        noise_amplitude: rng.random_range(0.02..0.08),
        texture_seed: rng.random(),
        region,
        storage_area,
        storage_color,
        placement_seed: rng.random(),
    }
}

fn randomize_cup<R: Rng>(rng: &mut R) -> CupScene {
    let background = hsv_to_rgb(
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..0.4),
        rng.random_range(0.2..0.8),
    );
    let cup = contrasting_color(rng, &[background], 0.25);
    let particle = contrasting_color(rng, &[background, cup], 0.4);
    CupScene {
        particle_count: FULL_CUP,
        cup_geometry: CupGeometry {
            rim_scale: rng.random_range(CUP_SCALE.0..=CUP_SCALE.1),
            height_scale: rng.random_range(CUP_SCALE.0..=CUP_SCALE.1),
            yaw: rng.random_range(0.0..core::f32::consts::PI),
        },
        particle_color: [particle[0], particle[1], particle[2], rng.random_range(0.75..=1.0)],
        cup_color: [cup[0], cup[1], cup[2], rng.random_range(0.2..=0.5)],
        background,
        particle_seed: rng.random(),
        texture_seed: rng.random(),
    }
}

/// Draws the phase-0 scene and four cameras of a run. Views 0..2 are
/// perturbed after every frame; view 3 (the robot's sensor) is not.
pub fn randomize_run(task: Task, run_seed: u64) -> RunSetup {
    let mut rng = seed::rng(run_seed, "scene", 0);
    let scene = match task {
        Task::Floor => Scene::Floor(randomize_floor(&mut rng)),
        Task::Cup => Scene::Cup(randomize_cup(&mut rng)),
    };
    let mut view_rng = seed::rng(run_seed, "views", 0);
    let views = core::array::from_fn(|v| {
        let jitter = if v == ROBOT_VIEW {
            Jitter::NONE
        } else {
            Jitter {
                translation: 0.02,
                rotation_deg: 3.0,
            }
        };
        sample_view(task, v, jitter, &mut view_rng)
    });
    RunSetup {
        seed: run_seed,
        scene,
        views,
    }
}

/// Particles left at a phase of the cup demonstration.
pub fn cup_particles_at_phase(phase: usize) -> u32 {
    let remaining = (PHASES - 1 - phase) as f64;
    libm::round(FULL_CUP as f64 * remaining / (PHASES - 1) as f64) as u32
}

/// The scene after `phase` steps of the demonstration, starting from the
/// phase-0 scene `initial`.
pub fn phase_scene(initial: &Scene, phase: usize) -> Result<Scene, SceneError> {
    if phase >= PHASES {
        return Err(SceneError::PhaseOutOfRange(phase));
    }
    match initial {
        Scene::Floor(s) => {
            let mut s = s.clone();
            for _ in 0..phase {
                s = remove_one(&s)?;
            }
            Ok(Scene::Floor(s))
        }
        Scene::Cup(s) => {
            let mut s = s.clone();
            s.particle_count = cup_particles_at_phase(phase);
            Ok(Scene::Cup(s))
        }
    }
}

fn remove_one(scene: &FloorScene) -> Result<FloorScene, SceneError> {
    let idx = scene.removal_candidate().ok_or(SceneError::RegionEmpty)?;
    let mut next = scene.clone();
    let obj = next.objects.remove(idx);
    next.storage.push(obj);
    Ok(next)
}

fn add_one(scene: &FloorScene) -> Result<FloorScene, SceneError> {
    let mut next = scene.clone();
    let mut obj = next.storage.pop().ok_or(SceneError::StorageEmpty)?;
    let mut rng = seed::rng(scene.placement_seed, "place", scene.objects.len() as u64 * 97 + scene.storage.len() as u64);
    // Prefer a spot that does not overlap an object already in the region.
    let region = scene.region;
    let mut best: Option<([f32; 2], f32)> = None;
    for _ in 0..32 {
        let p = [
            rng.random_range(region.min[0]..=region.max[0]),
            rng.random_range(region.min[1]..=region.max[1]),
        ];
        let clearance = scene
            .objects
            .iter()
            .map(|o| libm::sqrtf(dist2(o.position, p)) - (o.size + obj.size) / 2.0)
            .fold(f32::INFINITY, f32::min);
        if best.is_none_or(|(_, c)| clearance > c) {
            best = Some((p, clearance));
        }
        if clearance > 0.0 {
            break;
        }
    }
    obj.position = best.map_or(region.center(), |(p, _)| p);
    next.objects.push(obj);
    Ok(next)
}

pub fn apply_floor_action(scene: &FloorScene, action: FloorAction) -> Result<FloorScene, SceneError> {
    match action {
        FloorAction::RemoveOne => remove_one(scene),
        FloorAction::AddOne => add_one(scene),
    }
}

/// Pours change the count by 15, clamped to `[0, 345]`.
pub fn apply_cup_action(scene: &CupScene, action: CupAction) -> CupScene {
    let mut next = scene.clone();
    next.particle_count = match action {
        CupAction::PourIn => (scene.particle_count + POUR_QUANTUM).min(FULL_CUP),
        CupAction::PourOut => scene.particle_count.saturating_sub(POUR_QUANTUM),
    };
    next
}
