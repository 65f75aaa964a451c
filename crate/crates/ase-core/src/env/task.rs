//! The five downstream tasks: goal sampling, rewards, goal dynamics, and
//! termination.

use super::{rotate, sword_tip_world, CharState, EnvConfig};
use crate::error::{Error, Result};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reach,
    Speed,
    Steering,
    Location,
    Strike,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Reach,
        Task::Speed,
        Task::Steering,
        Task::Location,
        Task::Strike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::Speed => "speed",
            Task::Steering => "steering",
            Task::Location => "location",
            Task::Strike => "strike",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown task '{s}'")))
    }

    /// Dimension of the goal feature vector fed to the high-level policy.
    pub fn goal_dim(self) -> usize {
        match self {
            Task::Reach | Task::Location => 2,
            Task::Speed => 3,
            Task::Steering => 4,
            Task::Strike => 4,
        }
    }
}

/// Task goal; positions and directions live in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskGoal {
    /// Sword-tip target position.
    Reach { target: [f64; 2] },
    /// Travel along `dir` at speed `speed`.
    Speed { dir: [f64; 2], speed: f64 },
    /// Travel along `dir` at the fixed speed while facing `heading`.
    Steering {
        dir: [f64; 2],
        heading: [f64; 2],
        speed: f64,
    },
    /// Move the root to `target`.
    Location { target: [f64; 2] },
    /// Knock the target over: tilt grows while the sword tip strikes it.
    Strike {
        target: [f64; 2],
        tilt: f64,
        tilt_rate: f64,
    },
}

impl TaskGoal {
    pub fn task(&self) -> Task {
        match self {
            TaskGoal::Reach { .. } => Task::Reach,
            TaskGoal::Speed { .. } => Task::Speed,
            TaskGoal::Steering { .. } => Task::Steering,
            TaskGoal::Location { .. } => Task::Location,
            TaskGoal::Strike { .. } => Task::Strike,
        }
    }
}

fn unit_dir<R: Rng>(rng: &mut R) -> [f64; 2] {
    let a = rng.gen::<f64>() * 2.0 * PI;
    [a.cos(), a.sin()]
}

fn disc_point<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let d = unit_dir(rng);
    [center[0] + r * d[0], center[1] + r * d[1]]
}

/// Speed-task cap (m/s); the paper-scale value is 7, the planar model uses 4.
pub const SPEED_CAP_DESK: f64 = 4.0;
pub const SPEED_CAP_PAPER: f64 = 7.0;
/// Steering travels at a fixed 1.5 m/s.
pub const STEERING_SPEED: f64 = 1.5;

/// Draws a fresh goal for `task` relative to the character's current state.
pub fn sample_goal<R: Rng>(
    task: Task,
    rng: &mut R,
    state: &CharState,
    speed_cap: f64,
) -> TaskGoal {
    match task {
        Task::Reach => TaskGoal::Reach {
            target: disc_point(rng, state.pos, 1.0),
        },
        Task::Speed => TaskGoal::Speed {
            dir: unit_dir(rng),
            speed: rng.gen::<f64>() * speed_cap,
        },
        Task::Steering => TaskGoal::Steering {
            dir: unit_dir(rng),
            heading: unit_dir(rng),
            speed: STEERING_SPEED,
        },
        Task::Location => TaskGoal::Location {
            target: disc_point(rng, state.pos, 5.0),
        },
        Task::Strike => {
            let r = (4.0 + rng.gen::<f64>() * (25.0 - 4.0)).sqrt();
            let d = unit_dir(rng);
            TaskGoal::Strike {
                target: [state.pos[0] + r * d[0], state.pos[1] + r * d[1]],
                tilt: 0.0,
                tilt_rate: 0.0,
            }
        }
    }
}

/// Contact radius for the strike target (m).
const STRIKE_CONTACT_RADIUS: f64 = 0.2;
/// Minimum sword-tip speed that moves the strike target (m/s).
const STRIKE_MIN_TIP_SPEED: f64 = 1.0;
/// Root contact radius that ends a strike episode (m).
const STRIKE_BODY_RADIUS: f64 = 0.3;

/// Advances goal-side dynamics over one control step. Only the strike target
/// evolves: its tilt grows while the sword tip is in contact and moving
/// faster than the threshold, at a rate proportional to tip speed.
pub fn advance_goal(
    goal: &TaskGoal,
    state: &CharState,
    next_state: &CharState,
    config: &EnvConfig,
) -> TaskGoal {
    match *goal {
        TaskGoal::Strike { target, tilt, .. } => {
            let tip_prev = sword_tip_world(state, config);
            let tip_next = sword_tip_world(next_state, config);
            let dx = tip_next[0] - tip_prev[0];
            let dy = tip_next[1] - tip_prev[1];
            let tip_speed = (dx * dx + dy * dy).sqrt() / config.dt_control;
            let dist = ((tip_next[0] - target[0]).powi(2) + (tip_next[1] - target[1]).powi(2))
                .sqrt();
            let rate = if dist <= STRIKE_CONTACT_RADIUS && tip_speed > STRIKE_MIN_TIP_SPEED {
                config.strike_tilt_gain * tip_speed
            } else {
                0.0
            };
            TaskGoal::Strike {
                target,
                tilt: (tilt + rate * config.dt_control).clamp(0.0, FRAC_PI_2),
                tilt_rate: rate,
            }
        }
        g => g,
    }
}

/// Task reward in [0, 1], evaluated on the post-step state.
pub fn task_reward(
    task: Task,
    _state: &CharState,
    _action_unused: (),
    next_state: &CharState,
    goal: &TaskGoal,
    config: &EnvConfig,
) -> Result<f64> {
    if goal.task() != task {
        return Err(Error::usage(format!(
            "goal variant {:?} does not match task {:?}",
            goal.task(),
            task
        )));
    }
    let r = match *goal {
        TaskGoal::Reach { target } => {
            let tip = sword_tip_world(next_state, config);
            let d2 = (target[0] - tip[0]).powi(2) + (target[1] - tip[1]).powi(2);
            (-5.0 * d2).exp()
        }
        TaskGoal::Speed { dir, speed } => {
            let v = dir[0] * next_state.vel[0] + dir[1] * next_state.vel[1];
            (-0.25 * (speed - v).powi(2)).exp()
        }
        TaskGoal::Steering {
            dir,
            heading,
            speed,
        } => {
            let v = dir[0] * next_state.vel[0] + dir[1] * next_state.vel[1];
            let facing = [next_state.heading.cos(), next_state.heading.sin()];
            let align = heading[0] * facing[0] + heading[1] * facing[1];
            0.7 * (-0.25 * (speed - v).powi(2)).exp() + 0.3 * align
        }
        TaskGoal::Location { target } => {
            let d2 = (target[0] - next_state.pos[0]).powi(2)
                + (target[1] - next_state.pos[1]).powi(2);
            (-0.5 * d2).exp()
        }
        TaskGoal::Strike { tilt, .. } => 1.0 - tilt.cos(),
    };
    // The steering heading alignment can be negative; rewards stay in [0, 1].
    Ok(r.clamp(0.0, 1.0))
}

/// Early termination: only the strike task ends early, when the character's
/// root (any non-sword body part) touches the target.
pub fn episode_terminated(task: Task, state: &CharState, goal: &TaskGoal) -> bool {
    match (task, goal) {
        (Task::Strike, TaskGoal::Strike { target, .. }) => {
            let d2 =
                (state.pos[0] - target[0]).powi(2) + (state.pos[1] - target[1]).powi(2);
            d2 < STRIKE_BODY_RADIUS * STRIKE_BODY_RADIUS
        }
        _ => false,
    }
}

/// Goal features in the character's local frame, fed to the high-level
/// policy alongside the observation.
pub fn goal_features(goal: &TaskGoal, state: &CharState) -> Vec<f32> {
    let to_local = |world: [f64; 2]| {
        rotate(
            [world[0] - state.pos[0], world[1] - state.pos[1]],
            -state.heading,
        )
    };
    let dir_local = |dir: [f64; 2]| rotate(dir, -state.heading);
    match *goal {
        TaskGoal::Reach { target } | TaskGoal::Location { target } => {
            let l = to_local(target);
            vec![l[0] as f32, l[1] as f32]
        }
        TaskGoal::Speed { dir, speed } => {
            let d = dir_local(dir);
            vec![d[0] as f32, d[1] as f32, speed as f32]
        }
        TaskGoal::Steering { dir, heading, .. } => {
            let d = dir_local(dir);
            let h = dir_local(heading);
            vec![d[0] as f32, d[1] as f32, h[0] as f32, h[1] as f32]
        }
        TaskGoal::Strike {
            target,
            tilt,
            tilt_rate,
        } => {
            let l = to_local(target);
            vec![l[0] as f32, l[1] as f32, tilt as f32, tilt_rate as f32]
        }
    }
}
