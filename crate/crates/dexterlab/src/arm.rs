//! Simplified muscle-actuated planar arm with a 1-D touch surface.
//!
//! Three revolute joints (shoulder, elbow, index finger) driven by 11
//! muscle channels through constant moment arms. First-order activation
//! dynamics, unit-inertia semi-implicit Euler integration, joint limits
//! enforced by clamping. The "screen" is a line segment in the plane;
//! touches are fingertip crossings of that segment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_JOINTS: usize = 3;
pub const N_MUSCLES: usize = 11;
/// Channels 0..8 actuate the arm and index finger; 8..11 are the
/// "other finger" distractor channels with zero moment arms.
pub const N_ENABLED_DEFAULT: usize = 8;

/// Observation length for any [`ArmConfig`]: q(3), qdot(3), activations(11),
/// fingertip position(2), fingertip velocity(2), target center_s, radius,
/// extrusion_depth, lateral arclength error to the target center, front
/// distance to the touch plane, normalized remaining time.
pub const OBS_DIM: usize = 27;

#[derive(Debug, Error)]
pub enum ArmError {
    #[error("init_state rejection sampling exhausted {attempts} attempts; workspace/init ranges are inconsistent")]
    InitFailure { attempts: usize },
}

/// Line segment the fingertip can touch. `start`..`end` carries the
/// arclength coordinate; the front side is the one the left-perpendicular
/// of `end - start` points into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Surface {
    pub fn length(&self) -> f64 {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Unit vector along the segment.
    pub fn tangent(&self) -> [f64; 2] {
        let len = self.length();
        [
            (self.end[0] - self.start[0]) / len,
            (self.end[1] - self.start[1]) / len,
        ]
    }

    /// Unit normal pointing into the front half-plane.
    pub fn front_normal(&self) -> [f64; 2] {
        let t = self.tangent();
        [-t[1], t[0]]
    }

    /// Signed distance from the surface line, positive in front.
    pub fn front_distance(&self, p: [f64; 2]) -> f64 {
        let n = self.front_normal();
        (p[0] - self.start[0]) * n[0] + (p[1] - self.start[1]) * n[1]
    }

    /// Arclength coordinate of the projection of `p` onto the segment line.
    pub fn arclength_of(&self, p: [f64; 2]) -> f64 {
        let t = self.tangent();
        (p[0] - self.start[0]) * t[0] + (p[1] - self.start[1]) * t[1]
    }

    /// Point on the segment at arclength `s`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let t = self.tangent();
        [self.start[0] + t[0] * s, self.start[1] + t[1] * s]
    }
}

/// Axis-aligned workspace rectangle; leaving it terminates the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl WorkspaceBounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    /// Upper arm, forearm, finger lengths in meters.
    pub link_lengths: [f64; 3],
    /// (lo, hi) per joint, radians.
    pub joint_limits: [[f64; 2]; 3],
    /// Moment arm of each muscle channel on each joint, meters.
    /// Rows 8..11 are identically zero (distractor channels).
    pub muscle_moment_arms: [[f64; 3]; N_MUSCLES],
    /// Maximum isometric force per channel, newtons.
    pub muscle_max_force: [f64; N_MUSCLES],
    /// Viscous joint damping, N*m*s/rad.
    pub joint_damping: [f64; 3],
    /// Activation dynamics time constant, seconds.
    pub activation_tau: f64,
    /// Physics substep, seconds.
    pub physics_dt: f64,
    pub workspace_bounds: WorkspaceBounds,
    pub surface: Surface,
    /// Sub-ranges of the shoulder/elbow limits used by `init_state`.
    pub init_q_ranges: [[f64; 2]; 2],
}

impl Default for ArmConfig {
    fn default() -> Self {
        let r = 0.04; // shoulder moment arm
        let e = 0.03; // elbow moment arm
        let b = 0.025; // biarticular moment arm
        let f = 0.008; // finger moment arm
        ArmConfig {
            link_lengths: [0.30, 0.33, 0.08],
            joint_limits: [[-1.6, 1.6], [0.0, 2.8], [-0.6, 0.6]],
            muscle_moment_arms: [
                [r, 0.0, 0.0],   // shoulder flexor
                [-r, 0.0, 0.0],  // shoulder extensor
                [0.0, e, 0.0],   // elbow flexor
                [0.0, -e, 0.0],  // elbow extensor
                [b, b, 0.0],     // biarticular flexor
                [-b, -b, 0.0],   // biarticular extensor
                [0.0, 0.0, f],   // finger flexor
                [0.0, 0.0, -f],  // finger extensor
                [0.0, 0.0, 0.0], // distractor fingers
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
            ],
            muscle_max_force: [
                250.0, 250.0, 300.0, 300.0, 200.0, 200.0, 500.0, 500.0, 100.0, 100.0, 100.0,
            ],
            joint_damping: [12.5, 10.0, 1.25],
            activation_tau: 0.04,
            physics_dt: 0.002,
            workspace_bounds: WorkspaceBounds {
                min: [0.40, -0.09],
                max: [0.48, 0.09],
            },
            surface: Surface {
                start: [0.45, -0.06],
                end: [0.45, 0.06],
            },
            init_q_ranges: [[-1.42, -0.85], [1.70, 2.00]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub q: [f64; 3],
    pub qdot: [f64; 3],
    pub activations: [f64; N_MUSCLES],
    pub sim_time: f64,
    /// Fingertip position before the most recent integration substep.
    pub prev_fingertip: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Arclength coordinate of the target center along the surface.
    pub center_s: f64,
    pub radius: f64,
    /// Height of the volumetric target above the surface; 0 means flat.
    pub extrusion_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TouchEvent {
    None,
    Success { position_s: f64, time: f64 },
    Error { position_s: f64, time: f64 },
}

impl TouchEvent {
    pub fn is_none(&self) -> bool {
        matches!(self, TouchEvent::None)
    }
    pub fn is_success(&self) -> bool {
        matches!(self, TouchEvent::Success { .. })
    }
    pub fn is_error(&self) -> bool {
        matches!(self, TouchEvent::Error { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Timeout,
    OutOfBounds,
}

/// Per-control-step reward inputs, aggregated over the frameskip substeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Fingertip distance to the target's surface point at step start.
    pub dist_prev: f64,
    /// Same distance at step end.
    pub dist_now: f64,
    /// Mean over substeps of the summed squared activations.
    pub effort: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub touch: TouchEvent,
    pub terminated: Termination,
    pub diagnostics: StepDiagnostics,
}

/// Planar chain fingertip position: p = L1*u(q1) + L2*u(q1+q2) + Lf*u(q1+q2+q3).
pub fn forward_kinematics(q: [f64; 3], config: &ArmConfig) -> [f64; 2] {
    let [l1, l2, lf] = config.link_lengths;
    let a1 = q[0];
    let a2 = q[0] + q[1];
    let a3 = q[0] + q[1] + q[2];
    [
        l1 * a1.cos() + l2 * a2.cos() + lf * a3.cos(),
        l1 * a1.sin() + l2 * a2.sin() + lf * a3.sin(),
    ]
}

/// Joint positions along the chain (shoulder, elbow, wrist, fingertip).
/// Handy for plotting and debugging.
pub fn chain_points(q: [f64; 3], config: &ArmConfig) -> [[f64; 2]; 4] {
    let [l1, l2, lf] = config.link_lengths;
    let a1 = q[0];
    let a2 = q[0] + q[1];
    let a3 = q[0] + q[1] + q[2];
    let p1 = [l1 * a1.cos(), l1 * a1.sin()];
    let p2 = [p1[0] + l2 * a2.cos(), p1[1] + l2 * a2.sin()];
    let p3 = [p2[0] + lf * a3.cos(), p2[1] + lf * a3.sin()];
    [[0.0, 0.0], p1, p2, p3]
}

/// Exact first-order activation update toward the command `u`.
pub fn muscle_step(a: f64, u: f64, dt: f64, tau: f64) -> f64 {
    debug_assert!(dt > 0.0 && tau > 0.0);
    let a_new = u + (a - u) * (-dt / tau).exp();
    a_new.clamp(0.0, 1.0)
}

/// One unit-inertia semi-implicit Euler substep driven by the state's
/// current activations. Records the pre-step fingertip in `prev_fingertip`.
pub fn physics_step(state: &mut ArmState, config: &ArmConfig) {
    state.prev_fingertip = forward_kinematics(state.q, config);
    let dt = config.physics_dt;
    for j in 0..N_JOINTS {
        let mut torque = 0.0;
        for m in 0..N_MUSCLES {
            torque += config.muscle_moment_arms[m][j]
                * config.muscle_max_force[m]
                * state.activations[m];
        }
        torque -= config.joint_damping[j] * state.qdot[j];
        state.qdot[j] += torque * dt;
        state.q[j] += state.qdot[j] * dt;
        let [lo, hi] = config.joint_limits[j];
        if state.q[j] < lo {
            state.q[j] = lo;
            state.qdot[j] = 0.0;
        } else if state.q[j] > hi {
            state.q[j] = hi;
            state.qdot[j] = 0.0;
        }
    }
    state.sim_time += dt;
}

/// Classifies the fingertip motion `prev -> new` against the target.
///
/// Flat target: a front-side crossing of the surface segment fires Success
/// inside the target interval, Error outside it. Extruded target: entering
/// the box of height `extrusion_depth` above the interval is a Success;
/// crossings outside the interval are still Errors.
pub fn detect_touch(
    prev_tip: [f64; 2],
    new_tip: [f64; 2],
    target: &Target,
    surface: &Surface,
    time: f64,
) -> TouchEvent {
    let d_prev = surface.front_distance(prev_tip);
    let d_new = surface.front_distance(new_tip);
    if d_prev > 0.0 && d_new <= 0.0 {
        // Crossed the surface line from the front; interpolate the hit point.
        let t = d_prev / (d_prev - d_new);
        let hit = [
            prev_tip[0] + t * (new_tip[0] - prev_tip[0]),
            prev_tip[1] + t * (new_tip[1] - prev_tip[1]),
        ];
        let s = surface.arclength_of(hit);
        if s >= 0.0 && s <= surface.length() {
            return if (s - target.center_s).abs() <= target.radius {
                TouchEvent::Success { position_s: s, time }
            } else {
                TouchEvent::Error { position_s: s, time }
            };
        }
        return TouchEvent::None;
    }
    if target.extrusion_depth > 0.0 {
        let inside = |p: [f64; 2]| {
            let d = surface.front_distance(p);
            let s = surface.arclength_of(p);
            d >= 0.0 && d <= target.extrusion_depth && (s - target.center_s).abs() <= target.radius
        };
        if !inside(prev_tip) && inside(new_tip) {
            return TouchEvent::Success {
                position_s: surface.arclength_of(new_tip),
                time,
            };
        }
    }
    TouchEvent::None
}

pub fn check_termination(
    state: &ArmState,
    episode_limit: f64,
    config: &ArmConfig,
) -> Termination {
    if state.sim_time >= episode_limit {
        return Termination::Timeout;
    }
    let tip = forward_kinematics(state.q, config);
    if !config.workspace_bounds.contains(tip) {
        return Termination::OutOfBounds;
    }
    Termination::Running
}

/// Fixed observation layout; see [`OBS_DIM`] for the ordering.
pub fn build_observation(
    state: &ArmState,
    target: &Target,
    config: &ArmConfig,
    episode_limit: f64,
) -> Vec<f64> {
    let tip = forward_kinematics(state.q, config);
    let dt = config.physics_dt;
    let tip_vel = [
        (tip[0] - state.prev_fingertip[0]) / dt,
        (tip[1] - state.prev_fingertip[1]) / dt,
    ];
    let remaining = ((episode_limit - state.sim_time) / episode_limit).max(0.0);
    let mut obs = Vec::with_capacity(OBS_DIM);
    obs.extend_from_slice(&state.q);
    obs.extend_from_slice(&state.qdot);
    obs.extend_from_slice(&state.activations);
    obs.extend_from_slice(&tip);
    obs.extend_from_slice(&tip_vel);
    obs.push(target.center_s);
    obs.push(target.radius);
    obs.push(target.extrusion_depth);
    // Servo errors, normalized by the surface half-length so they are
    // order-1 features comparable to the joint-space entries.
    let half_len = 0.5 * config.surface.length();
    obs.push((target.center_s - config.surface.arclength_of(tip)) / half_len);
    obs.push((config.surface.front_distance(tip) - target.extrusion_depth) / half_len);
    obs.push(remaining);
    debug_assert_eq!(obs.len(), OBS_DIM);
    obs
}

/// Holds `action` for `frameskip` physics substeps (activation update then
/// integration each substep). The first non-None touch event of the window
/// is reported; the control period is `frameskip * physics_dt`.
pub fn env_step(
    state: &mut ArmState,
    action: &[f64; N_MUSCLES],
    frameskip: usize,
    target: &Target,
    config: &ArmConfig,
    episode_limit: f64,
) -> StepOutcome {
    assert!(frameskip >= 1);
    let tip0 = forward_kinematics(state.q, config);
    let anchor = config.surface.point_at(target.center_s);
    let dist = |p: [f64; 2]| ((p[0] - anchor[0]).powi(2) + (p[1] - anchor[1]).powi(2)).sqrt();
    let dist_prev = dist(tip0);

    let mut touch = TouchEvent::None;
    let mut effort_acc = 0.0;
    for _ in 0..frameskip {
        for m in 0..N_MUSCLES {
            state.activations[m] = muscle_step(
                state.activations[m],
                action[m],
                config.physics_dt,
                config.activation_tau,
            );
        }
        physics_step(state, config);
        effort_acc += state.activations.iter().map(|a| a * a).sum::<f64>();
        if touch.is_none() {
            let new_tip = forward_kinematics(state.q, config);
            touch = detect_touch(
                state.prev_fingertip,
                new_tip,
                target,
                &config.surface,
                state.sim_time,
            );
        }
    }

    let tip1 = forward_kinematics(state.q, config);
    let terminated = check_termination(state, episode_limit, config);
    StepOutcome {
        observation: build_observation(state, target, config, episode_limit),
        touch,
        terminated,
        diagnostics: StepDiagnostics {
            dist_prev,
            dist_now: dist(tip1),
            effort: effort_acc / frameskip as f64,
        },
    }
}

/// Samples shoulder/elbow angles uniformly within `init_q_ranges` until the
/// fingertip lands inside the workspace. The finger points forward (q3 = 0),
/// velocities and activations start at zero.
pub fn init_state<R: rand::Rng>(rng: &mut R, config: &ArmConfig) -> Result<ArmState, ArmError> {
    const MAX_ATTEMPTS: usize = 1000;
    for _ in 0..MAX_ATTEMPTS {
        let [r1, r2] = config.init_q_ranges;
        let q1 = rng.random_range(r1[0]..=r1[1]);
        let q2 = rng.random_range(r2[0]..=r2[1]);
        let q = [q1, q2, 0.0];
        let tip = forward_kinematics(q, config);
        if config.workspace_bounds.contains(tip) {
            return Ok(ArmState {
                q,
                qdot: [0.0; 3],
                activations: [0.0; N_MUSCLES],
                sim_time: 0.0,
                prev_fingertip: tip,
            });
        }
    }
    Err(ArmError::InitFailure {
        attempts: MAX_ATTEMPTS,
    })
}
