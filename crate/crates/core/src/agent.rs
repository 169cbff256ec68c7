//! Closed-loop episodes against the simulator.
//!
//! Each step renders an observation, asks the policy for an action and
//! applies it to the ground-truth scene, stopping on `Hold`. On the floor the
//! observer stands at a fresh random viewpoint every step; the cup is watched
//! from the robot's fixed camera with a small per-step jitter.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::tensor_digest;
use crate::policy::{build_policy, Action, Policy, PolicyError};
use crate::scenesim::{
    apply_cup_action, apply_floor_action, cup_particles_at_phase, phase_scene, randomize_run, render, sample_view,
    CupAction, CupScene, FloorAction, FloorScene, ImageTensor, Jitter, RunSetup, Scene, SceneError, Task, ViewParams,
    FLOOR_OBJECTS, FULL_CUP,
};
use crate::{seed, EmbedderParams, Embedding, PHASES};

pub const DEFAULT_MAX_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("max_steps must be at least 1")]
    NoSteps,
    #[error("initial count {0} is not reachable on this task")]
    BadInitial(u32),
    #[error("goal {0} is not reachable on this task")]
    BadGoal(u32),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub observation_seed: u64,
    pub image_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    ConvergedHold,
    MaxSteps,
    ActionError,
}

/// What was applied to the world at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldAction {
    RemoveOne,
    AddOne,
    PourIn,
    PourOut,
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub image_digest: u64,
    pub nn_index: usize,
    pub nn_distance: f32,
    pub distance_to_goal: f32,
    pub action: Action,
    pub world_action: WorldAction,
    /// Objects in the region or particles in the cup when the image was taken.
    pub ground_truth: u32,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: Task,
    pub goal_index: usize,
    pub goal_ground_truth: u32,
    pub initial_ground_truth: u32,
    pub final_ground_truth: u32,
    pub goal_embedding: Embedding,
    pub steps: Vec<StepRecord>,
    pub status: TerminalStatus,
}

impl EpisodeTrace {
    /// `n_final - n_goal`.
    pub fn error(&self) -> i64 {
        self.final_ground_truth as i64 - self.goal_ground_truth as i64
    }

    /// Net change the executed actions imply.
    pub fn action_tally(&self) -> i64 {
        self.steps
            .iter()
            .map(|s| match s.world_action {
                WorldAction::RemoveOne => -1,
                WorldAction::AddOne => 1,
                WorldAction::PourIn => 0,
                WorldAction::PourOut => 0,
                WorldAction::Nothing => 0,
            })
            .sum()
    }
}

/// Per-step distance between the observation and the goal embedding.
pub fn distance_to_go(trace: &EpisodeTrace, goal: &Embedding) -> Vec<f32> {
    trace
        .steps
        .iter()
        .map(|s| libm::sqrtf(crate::embedder::squared_distance(&s.embedding, goal.as_slice())))
        .collect()
}

enum World {
    Floor(FloorScene),
    Cup(CupScene),
}

impl World {
    fn ground_truth(&self) -> u32 {
        match self {
            World::Floor(s) => s.objects.len() as u32,
            World::Cup(s) => s.particle_count,
        }
    }

    fn scene(&self) -> Scene {
        match self {
            World::Floor(s) => Scene::Floor(s.clone()),
            World::Cup(s) => Scene::Cup(s.clone()),
        }
    }

    fn apply(&mut self, action: Action) -> Result<WorldAction, SceneError> {
        Ok(match (self, action) {
            (_, Action::Hold) => WorldAction::Nothing,
            (World::Floor(s), a) => {
                let fa = if a == Action::Advance {
                    FloorAction::RemoveOne
                } else {
                    FloorAction::AddOne
                };
                *s = apply_floor_action(s, fa)?;
                match fa {
                    FloorAction::RemoveOne => WorldAction::RemoveOne,
                    FloorAction::AddOne => WorldAction::AddOne,
                }
            }
            // Frames advance as the cup empties.
            (World::Cup(s), a) => {
                let ca = if a == Action::Advance {
                    CupAction::PourOut
                } else {
                    CupAction::PourIn
                };
                *s = apply_cup_action(s, ca);
                match ca {
                    CupAction::PourIn => WorldAction::PourIn,
                    CupAction::PourOut => WorldAction::PourOut,
                }
            }
        })
    }
}

fn run_episode(
    params: &EmbedderParams,
    policy: &Policy,
    mut world: World,
    goal_ground_truth: u32,
    config: &EpisodeConfig,
    observe: impl Fn(usize) -> ViewParams,
) -> Result<EpisodeTrace, AgentError> {
    if config.max_steps == 0 {
        return Err(AgentError::NoSteps);
    }
    let task = match world {
        World::Floor(_) => Task::Floor,
        World::Cup(_) => Task::Cup,
    };
    let initial = world.ground_truth();
    let goal = policy.goal_embedding().clone();
    let mut steps = Vec::new();
    let mut status = TerminalStatus::MaxSteps;
    for step in 0..config.max_steps {
        let view = observe(step);
        let image = render(&world.scene(), &view, step as u32, config.image_size);
        let q = policy.query_action(params, &image)?;
        let ground_truth = world.ground_truth();
        let (world_action, failed) = match world.apply(q.action) {
            Ok(a) => (a, false),
            Err(_) => (WorldAction::Nothing, true),
        };
        steps.push(StepRecord {
            step,
            image_digest: tensor_digest(&image),
            nn_index: q.index,
            nn_distance: q.distance,
            distance_to_goal: q.embedding.distance(&goal),
            action: q.action,
            world_action,
            ground_truth,
            embedding: q.embedding.0,
        });
        if failed {
            status = TerminalStatus::ActionError;
            break;
        }
        if q.action == Action::Hold {
            status = TerminalStatus::ConvergedHold;
            break;
        }
    }
    Ok(EpisodeTrace {
        task,
        goal_index: policy.goal_index(),
        goal_ground_truth,
        initial_ground_truth: initial,
        final_ground_truth: world.ground_truth(),
        goal_embedding: goal,
        steps,
        status,
    })
}

/// Cleaning/spreading episode. The observer draws a fresh viewpoint from the
/// training camera distribution at every step.
pub fn run_cleaning_episode(
    params: &EmbedderParams,
    policy: &Policy,
    scene: FloorScene,
    goal_ground_truth: u32,
    config: &EpisodeConfig,
) -> Result<EpisodeTrace, AgentError> {
    let obs_seed = config.observation_seed;
    run_episode(params, policy, World::Floor(scene), goal_ground_truth, config, |step| {
        let mut rng = seed::rng(obs_seed, "observe", step as u64);
        sample_view(Task::Floor, crate::ROBOT_VIEW, Jitter::NONE, &mut rng)
    })
}

/// Jitter of the fixed cup camera between pouring steps.
pub const POURING_JITTER: Jitter = Jitter {
    translation: 0.01,
    rotation_deg: 2.0,
};

/// Pouring episode observed from the robot's fixed camera.
pub fn run_pouring_episode(
    params: &EmbedderParams,
    policy: &Policy,
    scene: CupScene,
    robot_view: &ViewParams,
    goal_ground_truth: u32,
    config: &EpisodeConfig,
) -> Result<EpisodeTrace, AgentError> {
    let mut view = *robot_view;
    view.jitter = POURING_JITTER;
    view.jitter_seed = seed::derive(config.observation_seed, "pour-jitter", 0);
    view.noise_seed = seed::derive(config.observation_seed, "pour-noise", 0);
    run_episode(params, policy, World::Cup(scene), goal_ground_truth, config, |_| view)
}

/// The robot-view demonstration of a run: one image per phase.
pub fn demonstration(setup: &RunSetup, image_size: usize) -> Result<Vec<ImageTensor>, SceneError> {
    (0..PHASES)
        .map(|p| Ok(render(&phase_scene(&setup.scene, p)?, setup.robot_view(), p as u32, image_size)))
        .collect()
}

/// A ready-to-run cleaning task: a randomized run, its policy and start scene.
pub struct CleaningTask {
    pub setup: RunSetup,
    pub policy: Policy,
    pub initial: FloorScene,
    pub goal_count: u32,
}

/// Builds the task from a run seed. The goal is frame `goal_index` of the
/// demonstration (`15 - goal_index` objects left); the episode starts with
/// `initial_count` objects in the region.
pub fn cleaning_task(
    params: &EmbedderParams,
    run_seed: u64,
    goal_index: usize,
    initial_count: u32,
    image_size: usize,
) -> Result<CleaningTask, AgentError> {
    if goal_index >= PHASES {
        return Err(AgentError::BadGoal(goal_index as u32));
    }
    if initial_count as usize > FLOOR_OBJECTS {
        return Err(AgentError::BadInitial(initial_count));
    }
    let setup = randomize_run(Task::Floor, run_seed);
    let policy = build_policy(params, demonstration(&setup, image_size)?, goal_index)?;
    let initial = match phase_scene(&setup.scene, FLOOR_OBJECTS - initial_count as usize)? {
        Scene::Floor(s) => s,
        Scene::Cup(_) => unreachable!("floor run"),
    };
    Ok(CleaningTask {
        setup,
        policy,
        initial,
        goal_count: (FLOOR_OBJECTS - goal_index) as u32,
    })
}

/// A ready-to-run pouring task.
pub struct PouringTask {
    pub setup: RunSetup,
    pub policy: Policy,
    pub initial: CupScene,
    pub goal_particles: u32,
}

/// Demonstration phase whose particle count is closest to `particles`.
pub fn nearest_cup_phase(particles: u32) -> usize {
    (0..PHASES)
        .min_by_key(|&p| (cup_particles_at_phase(p) as i64 - particles as i64).unsigned_abs())
        .expect("phases are non-empty")
}

/// Builds a pouring task whose goal image shows `goal_particles` particles.
/// The goal image takes the place of the closest demonstration frame.
pub fn pouring_task(
    params: &EmbedderParams,
    run_seed: u64,
    goal_particles: u32,
    initial_particles: u32,
    image_size: usize,
) -> Result<PouringTask, AgentError> {
    if goal_particles > FULL_CUP {
        return Err(AgentError::BadGoal(goal_particles));
    }
    if initial_particles > FULL_CUP {
        return Err(AgentError::BadInitial(initial_particles));
    }
    let setup = randomize_run(Task::Cup, run_seed);
    let base = match &setup.scene {
        Scene::Cup(s) => s.clone(),
        Scene::Floor(_) => unreachable!("cup run"),
    };
    let goal_index = nearest_cup_phase(goal_particles);
    let mut images = demonstration(&setup, image_size)?;
    let mut goal_scene = base.clone();
    goal_scene.particle_count = goal_particles;
    images[goal_index] = render(&Scene::Cup(goal_scene), setup.robot_view(), goal_index as u32, image_size);
    let policy = build_policy(params, images, goal_index)?;
    let mut initial = base;
    initial.particle_count = initial_particles;
    Ok(PouringTask {
        setup,
        policy,
        initial,
        goal_particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_phase_for_default_goals() {
        assert_eq!(nearest_cup_phase(345), 0);
        assert_eq!(nearest_cup_phase(275), 3);
        assert_eq!(nearest_cup_phase(207), 6);
        assert_eq!(nearest_cup_phase(138), 9);
        assert_eq!(nearest_cup_phase(69), 12);
        assert_eq!(nearest_cup_phase(0), 15);
    }
}
