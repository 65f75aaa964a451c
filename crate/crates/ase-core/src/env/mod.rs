//! Deterministic planar-character simulator.
//!
//! A single rigid "character" moves in the plane under body-frame
//! acceleration commands, with a posture-height scalar, an uprightness
//! scalar driving fall/recovery logic, and a two-link arm under PD control
//! whose end effector plays the role of a sword tip. Physics runs at 120 Hz
//! (4 substeps per 30 Hz control step) and all state math is `f64` so that
//! trajectories are bit-reproducible.

pub mod task;

use crate::error::{Error, Result};
use rand::Rng;

pub use task::{advance_goal, episode_terminated, sample_goal, task_reward, Task, TaskGoal};

/// Number of observation features.
pub const OBS_DIM: usize = 11;
/// Number of action components.
pub const ACTION_DIM: usize = 7;

/// Physical state of the planar character.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharState {
    /// Root position in the world frame (m).
    pub pos: [f64; 2],
    /// Heading angle (rad).
    pub heading: f64,
    /// Root linear velocity in the world frame (m/s).
    pub vel: [f64; 2],
    /// Root angular velocity (rad/s).
    pub ang_vel: f64,
    /// Posture height in [0.2, 1.0]; stand-in for root height.
    pub height: f64,
    /// Uprightness in [0, 1]; 1 = balanced, low values = fallen.
    pub upright: f64,
    /// Arm joint angles (rad).
    pub q: [f64; 2],
    /// Arm joint velocities (rad/s).
    pub dq: [f64; 2],
}

impl CharState {
    pub fn standing(heading: f64) -> Self {
        Self {
            pos: [0.0, 0.0],
            heading,
            vel: [0.0, 0.0],
            ang_vel: 0.0,
            height: 1.0,
            upright: 1.0,
            q: [0.0, 0.0],
            dq: [0.0, 0.0],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite())
            && self.heading.is_finite()
            && self.vel.iter().all(|v| v.is_finite())
            && self.ang_vel.is_finite()
            && self.height.is_finite()
            && self.upright.is_finite()
            && self.q.iter().all(|v| v.is_finite())
            && self.dq.iter().all(|v| v.is_finite())
    }
}

/// Control inputs, clamped to their ranges on entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharAction {
    /// Forward acceleration command, body frame, [-1, 1].
    pub fwd: f64,
    /// Lateral acceleration command, body frame, [-1, 1].
    pub lat: f64,
    /// Turn command, [-1, 1].
    pub turn: f64,
    /// Posture-height rate command, [-1, 1].
    pub height_rate: f64,
    /// Balance-recovery effort, [0, 1].
    pub balance: f64,
    /// PD target for joint 1, [-pi, pi].
    pub target_q1: f64,
    /// PD target for joint 2, [-pi, pi].
    pub target_q2: f64,
}

impl CharAction {
    pub fn clamped(&self) -> Self {
        use std::f64::consts::PI;
        Self {
            fwd: self.fwd.clamp(-1.0, 1.0),
            lat: self.lat.clamp(-1.0, 1.0),
            turn: self.turn.clamp(-1.0, 1.0),
            height_rate: self.height_rate.clamp(-1.0, 1.0),
            balance: self.balance.clamp(0.0, 1.0),
            target_q1: self.target_q1.clamp(-PI, PI),
            target_q2: self.target_q2.clamp(-PI, PI),
        }
    }

    /// Builds an action from a raw network output vector (length 7), mapping
    /// each component into its range by clamping.
    pub fn from_vec(a: &[f32]) -> Self {
        debug_assert_eq!(a.len(), ACTION_DIM);
        Self {
            fwd: f64::from(a[0]),
            lat: f64::from(a[1]),
            turn: f64::from(a[2]),
            height_rate: f64::from(a[3]),
            balance: f64::from(a[4]),
            target_q1: f64::from(a[5]),
            target_q2: f64::from(a[6]),
        }
        .clamped()
    }
}

/// State features in the character's local frame, in fixed order:
/// height, upright, local vx, local vy, angular velocity, q1, q2, dq1, dq2,
/// sword tip x, sword tip y.
pub type Observation = [f32; OBS_DIM];

pub const FEATURE_NAMES: [&str; OBS_DIM] = [
    "height",
    "upright",
    "local_vel_x",
    "local_vel_y",
    "ang_vel",
    "arm_q1",
    "arm_q2",
    "arm_dq1",
    "arm_dq2",
    "sword_tip_x",
    "sword_tip_y",
];

/// Physical constants; see field docs for units.
#[derive(Debug, Clone, Copy)]
pub struct EnvConfig {
    /// Control interval (s); the policy acts at 30 Hz.
    pub dt_control: f64,
    /// Physics substeps per control step (physics at 120 Hz).
    pub substeps: u32,
    /// Peak linear acceleration (m/s^2).
    pub a_max: f64,
    /// Peak angular acceleration (rad/s^2).
    pub alpha_max: f64,
    /// Linear drag (1/s).
    pub drag: f64,
    /// Rotational drag (1/s).
    pub rot_drag: f64,
    /// Posture-height rate (1/s).
    pub height_rate: f64,
    /// Joint PD gains.
    pub kp: f64,
    pub kd: f64,
    /// Arm link lengths (m).
    pub link1: f64,
    pub link2: f64,
    /// Balance recovery gain (1/s).
    pub recovery_gain: f64,
    /// Fallen iff upright < this.
    pub fall_threshold: f64,
    /// Recovered iff upright >= this (and height >= 0.8).
    pub recover_threshold: f64,
    /// Uprightness lost per unit of impulse speed (s/m).
    pub impulse_upright_loss: f64,
    /// Strike-task tilt gained per metre of sword-tip travel while in
    /// contact (rad/m).
    pub strike_tilt_gain: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt_control: 1.0 / 30.0,
            substeps: 4,
            a_max: 8.0,
            alpha_max: 10.0,
            drag: 0.8,
            rot_drag: 2.0,
            height_rate: 2.0,
            kp: 40.0,
            kd: 4.0,
            link1: 0.4,
            link2: 0.4,
            recovery_gain: 2.0,
            fall_threshold: 0.3,
            recover_threshold: 0.8,
            impulse_upright_loss: 0.15,
            strike_tilt_gain: 1.5,
        }
    }
}

/// Rotates `v` by angle `a`.
#[inline]
pub fn rotate(v: [f64; 2], a: f64) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Initial state: with probability `fall_prob` a random fallen configuration,
/// otherwise standing with a random heading.
pub fn reset<R: Rng>(config: &EnvConfig, rng: &mut R, fall_prob: f64) -> CharState {
    use std::f64::consts::PI;
    let fallen = rng.gen::<f64>() < fall_prob;
    let heading = rng.gen::<f64>() * 2.0 * PI - PI;
    if !fallen {
        return CharState::standing(heading);
    }
    CharState {
        pos: [0.0, 0.0],
        heading,
        vel: [
            rng.gen::<f64>() * 1.0 - 0.5,
            rng.gen::<f64>() * 1.0 - 0.5,
        ],
        ang_vel: rng.gen::<f64>() * 2.0 - 1.0,
        height: 0.2 + rng.gen::<f64>() * 0.8,
        upright: rng.gen::<f64>() * config.fall_threshold,
        q: [
            rng.gen::<f64>() * 2.0 * PI - PI,
            rng.gen::<f64>() * 2.0 * PI - PI,
        ],
        dq: [
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        ],
    }
}

/// Advances one control step (`substeps` physics substeps). Deterministic.
pub fn step(state: &CharState, action: &CharAction, config: &EnvConfig) -> Result<CharState> {
    if !state.is_finite() {
        return Err(Error::non_finite("simulator state"));
    }
    let a = action.clamped();
    let dt = config.dt_control / f64::from(config.substeps);
    let mut s = *state;
    for _ in 0..config.substeps {
        // Locomotion commands attenuate with uprightness once fallen.
        let s_loc = if s.upright < config.fall_threshold {
            s.upright
        } else {
            1.0
        };
        let acc = rotate([a.fwd, a.lat], s.heading);
        s.vel[0] += acc[0] * config.a_max * s_loc * dt - config.drag * s.vel[0] * dt;
        s.vel[1] += acc[1] * config.a_max * s_loc * dt - config.drag * s.vel[1] * dt;
        s.heading += s.ang_vel * dt;
        s.ang_vel += a.turn * config.alpha_max * s_loc * dt - config.rot_drag * s.ang_vel * dt;
        s.pos[0] += s.vel[0] * dt;
        s.pos[1] += s.vel[1] * dt;
        s.height = (s.height + a.height_rate * config.height_rate * dt).clamp(0.2, 1.0);
        let targets = [a.target_q1, a.target_q2];
        for j in 0..2 {
            let ddq = config.kp * (targets[j] - s.q[j]) - config.kd * s.dq[j];
            s.dq[j] += ddq * dt;
            s.q[j] = (s.q[j] + s.dq[j] * dt).clamp(-std::f64::consts::PI, std::f64::consts::PI);
        }
        s.upright = (s.upright + config.recovery_gain * a.balance * dt).clamp(0.0, 1.0);
    }
    if !s.is_finite() {
        return Err(Error::non_finite("simulator step"));
    }
    Ok(s)
}

/// Sword-tip position in the character's local frame (two-link forward
/// kinematics).
pub fn sword_tip_local(state: &CharState, config: &EnvConfig) -> [f64; 2] {
    let q1 = state.q[0];
    let q12 = state.q[0] + state.q[1];
    [
        config.link1 * q1.cos() + config.link2 * q12.cos(),
        config.link1 * q1.sin() + config.link2 * q12.sin(),
    ]
}

/// Sword-tip position in the world frame.
pub fn sword_tip_world(state: &CharState, config: &EnvConfig) -> [f64; 2] {
    let local = sword_tip_local(state, config);
    let rotated = rotate(local, state.heading);
    [state.pos[0] + rotated[0], state.pos[1] + rotated[1]]
}

/// Local-frame feature encoding of the state.
pub fn observe(state: &CharState, config: &EnvConfig) -> Observation {
    let local_v = rotate(state.vel, -state.heading);
    let tip = sword_tip_local(state, config);
    [
        state.height as f32,
        state.upright as f32,
        local_v[0] as f32,
        local_v[1] as f32,
        state.ang_vel as f32,
        state.q[0] as f32,
        state.q[1] as f32,
        state.dq[0] as f32,
        state.dq[1] as f32,
        tip[0] as f32,
        tip[1] as f32,
    ]
}

/// Adds an instantaneous velocity impulse and knocks the character's
/// uprightness down in proportion to the impulse magnitude.
pub fn apply_perturbation(state: &CharState, impulse: [f64; 2], config: &EnvConfig) -> CharState {
    let mut s = *state;
    s.vel[0] += impulse[0];
    s.vel[1] += impulse[1];
    let magnitude = (impulse[0] * impulse[0] + impulse[1] * impulse[1]).sqrt();
    s.upright = (s.upright - config.impulse_upright_loss * magnitude).clamp(0.0, 1.0);
    s
}

pub fn is_fallen(state: &CharState, config: &EnvConfig) -> bool {
    state.upright < config.fall_threshold
}

pub fn is_recovered(state: &CharState, config: &EnvConfig) -> bool {
    state.upright >= config.recover_threshold && state.height >= 0.8
}
