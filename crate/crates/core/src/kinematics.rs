//! Robot kinematic model: action scaling, per-step action application and
//! footprint collision queries.
//!
//! The base is a disc; the arm is a telescoping link mounted slightly ahead of
//! the base centre that extends to the robot's right, with a wrist-mounted
//! gripper of fixed length. Only the base disc collides with the scene.

use crate::error::{Error, Result};
use crate::geometry::{circle_intersects_rect, circle_intersects_segment, wrap_angle, Pose2, Vec2};
use crate::scene::Scene;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub const LIFT_MIN: f64 = 0.1;
pub const LIFT_MAX: f64 = 1.1;
pub const EXTENSION_MIN: f64 = 0.0;
pub const EXTENSION_MAX: f64 = 0.52;

/// Per-step magnitude bounds, in the order of the raw action vector.
pub const MAX_FORWARD: f64 = 0.2;
pub const MAX_ROTATE: f64 = 0.3;
pub const MAX_LIFT: f64 = 0.05;
pub const MAX_EXTEND: f64 = 0.05;
pub const MAX_WRIST: f64 = 0.3;

/// A raw action component above this value triggers the grasp.
pub const GRASP_TRIGGER: f64 = 0.5;

pub const RAW_ACTION_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    pub base_radius: f64,
    pub arm_forward_offset: f64,
    pub arm_lateral_base: f64,
    pub gripper_length: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            base_radius: 0.17,
            arm_forward_offset: 0.10,
            arm_lateral_base: 0.20,
            gripper_length: 0.17,
        }
    }
}

pub const LIMITS: RobotLimits = RobotLimits {
    base_radius: 0.17,
    arm_forward_offset: 0.10,
    arm_lateral_base: 0.20,
    gripper_length: 0.17,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base: Pose2,
    pub lift: f64,
    pub extension: f64,
    pub wrist: f64,
    /// Set while the magnetic grasper holds the scene's handle.
    pub holding: bool,
}

impl RobotState {
    pub fn new(base: Pose2) -> Self {
        Self {
            base,
            lift: 0.6,
            extension: 0.0,
            wrist: 0.0,
            holding: false,
        }
    }

    pub fn satisfies_joint_limits(&self) -> bool {
        (LIFT_MIN..=LIFT_MAX).contains(&self.lift)
            && (EXTENSION_MIN..=EXTENSION_MAX).contains(&self.extension)
            && self.wrist > -std::f64::consts::PI
            && self.wrist <= std::f64::consts::PI
            && self.base.theta > -std::f64::consts::PI
            && self.base.theta <= std::f64::consts::PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionCommand {
    pub d_forward: f64,
    pub d_rotate: f64,
    pub d_lift: f64,
    pub d_extend: f64,
    pub d_wrist: f64,
    /// `None` for tasks without a grasp dimension.
    pub grasp: Option<bool>,
}

impl ActionCommand {
    pub fn grasp_triggered(&self) -> bool {
        self.grasp == Some(true)
    }
}

/// Scales a policy output in `[-1, 1]^6` to a bounded command.
pub fn clamp_action(raw: &[f64], has_grasp: bool) -> Result<ActionCommand> {
    if raw.len() != RAW_ACTION_DIM {
        return Err(Error::Dimension {
            expected: RAW_ACTION_DIM,
            got: raw.len(),
        });
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "action component {i} is not finite"
        )));
    }
    let s = |i: usize, bound: f64| bound * raw[i].clamp(-1.0, 1.0);
    Ok(ActionCommand {
        d_forward: s(0, MAX_FORWARD),
        d_rotate: s(1, MAX_ROTATE),
        d_lift: s(2, MAX_LIFT),
        d_extend: s(3, MAX_EXTEND),
        d_wrist: s(4, MAX_WRIST),
        grasp: has_grasp.then(|| raw[5] > GRASP_TRIGGER),
    })
}

/// True iff the base disc at `pose` overlaps any wall, the door panel at
/// `door_angle`, the table, or an obstacle. Touching exactly at the radius is
/// not a collision.
pub fn footprint_collides(pose: &Pose2, scene: &Scene, door_angle: f64) -> bool {
    disc_collides(pose.position(), LIMITS.base_radius, scene, door_angle)
}

pub(crate) fn disc_collides(c: Vec2, radius: f64, scene: &Scene, door_angle: f64) -> bool {
    scene
        .walls
        .iter()
        .any(|w| circle_intersects_segment(c, radius, w))
        || scene
            .door
            .as_ref()
            .is_some_and(|d| circle_intersects_segment(c, radius, &d.panel_segment(door_angle)))
        || scene.solid_rects().any(|r| circle_intersects_rect(c, radius, r))
}

/// Applies one command. Rotation is applied before translation. A base move
/// that would collide is dropped entirely (arm sub-moves still apply) and the
/// returned flag is `false`.
pub fn apply_action(
    state: &RobotState,
    cmd: &ActionCommand,
    scene: &Scene,
    door_angle: f64,
) -> (RobotState, bool) {
    let mut next = *state;
    let theta = wrap_angle(state.base.theta + cmd.d_rotate);
    let heading = Vec2::from_angle(theta);
    let pos = state.base.position() + heading * cmd.d_forward;
    let candidate = Pose2::new(pos.x, pos.y, theta);

    let moved = cmd.d_forward != 0.0 || cmd.d_rotate != 0.0;
    let valid = !moved || !footprint_collides(&candidate, scene, door_angle);
    if valid {
        next.base = candidate;
    }
    next.lift = (state.lift + cmd.d_lift).clamp(LIFT_MIN, LIFT_MAX);
    next.extension = (state.extension + cmd.d_extend).clamp(EXTENSION_MIN, EXTENSION_MAX);
    next.wrist = wrap_angle(state.wrist + cmd.d_wrist);
    (next, valid)
}

/// Wrist position: `base + R(θ)·(forward_offset, -(lateral_base + extension))`, z = lift.
pub fn end_effector_position(state: &RobotState) -> [f64; 3] {
    let p = end_effector_planar(state);
    [p.x, p.y, state.lift]
}

pub fn end_effector_planar(state: &RobotState) -> Vec2 {
    let local = Vec2::new(
        LIMITS.arm_forward_offset,
        -(LIMITS.arm_lateral_base + state.extension),
    );
    state.base.transform_point(local)
}

/// Gripper (or sponge) tip, one gripper length from the wrist along
/// `θ - π/2 + wrist`.
pub fn gripper_tip(state: &RobotState) -> [f64; 3] {
    let p = gripper_tip_planar(state);
    [p.x, p.y, state.lift]
}

pub fn gripper_tip_planar(state: &RobotState) -> Vec2 {
    end_effector_planar(state)
        + Vec2::from_angle(state.base.theta - FRAC_PI_2 + state.wrist) * LIMITS.gripper_length
}
