//! Procedural articulation of hinged panels and dirt removal.
//!
//! Push: a panel rotates when the end-effector moves along the panel's
//! opening normal while the gripper tip touches the panel.
//! Pull: once the handle is grasped, the panel angle tracks the gripper tip.
//! Both resolutions shrink the rotation by bisection so the panel never
//! sweeps through the robot's base.

use crate::geometry::{circle_intersects_segment, Vec2};
use crate::kinematics::{end_effector_planar, gripper_tip_planar, RobotState, LIMITS};
use crate::scene::{DoorSpec, TableSpec};
use serde::{Deserialize, Serialize};

/// Tunable interaction constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionConstants {
    pub alignment_cos: f64,
    pub contact_eps: f64,
    pub max_step: f64,
    pub lever_floor: f64,
    pub grasp_radius: f64,
    pub grasp_height_band: f64,
    pub grasp_break: f64,
    pub push_height_band: f64,
    pub sponge_radius: f64,
    pub sweep_height_band: f64,
    pub bisection_iterations: usize,
}

pub const CONSTANTS: InteractionConstants = InteractionConstants {
    alignment_cos: 0.5,
    contact_eps: 0.08,
    max_step: 0.15,
    lever_floor: 0.2,
    grasp_radius: 0.10,
    grasp_height_band: 0.10,
    grasp_break: 0.25,
    push_height_band: 0.4,
    sponge_radius: 0.06,
    sweep_height_band: 0.05,
    bisection_iterations: 20,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoorState {
    pub spec: DoorSpec,
    pub theta: f64,
}

impl DoorState {
    pub fn closed(spec: DoorSpec) -> Self {
        Self { spec, theta: 0.0 }
    }

    pub fn open_fraction(&self) -> f64 {
        open_fraction(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraspState {
    pub holding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirtField {
    pub remaining: Vec<Vec2>,
    pub initial_count: usize,
}

impl DirtField {
    pub fn new(points: &[Vec2]) -> Self {
        Self {
            remaining: points.to_vec(),
            initial_count: points.len(),
        }
    }

    pub fn cleaned_fraction(&self) -> f64 {
        if self.initial_count == 0 {
            return 0.0;
        }
        1.0 - self.remaining.len() as f64 / self.initial_count as f64
    }
}

pub fn open_fraction(door: &DoorState) -> f64 {
    (door.theta / door.spec.theta_max).clamp(0.0, 1.0)
}

/// Handle location at the door's current angle; z is the handle height.
pub fn handle_position(door: &DoorState) -> [f64; 3] {
    let p = door.spec.handle_planar(door.theta);
    [p.x, p.y, door.spec.handle_height]
}

pub fn panel_hits_base(spec: &DoorSpec, theta: f64, robot: &RobotState) -> bool {
    circle_intersects_segment(
        robot.base.position(),
        LIMITS.base_radius,
        &spec.panel_segment(theta),
    )
}

/// Largest move from `from` toward `to` whose panel clears the base,
/// assuming the panel at `from` is clear.
fn clear_angle(spec: &DoorSpec, robot: &RobotState, from: f64, to: f64) -> f64 {
    if !panel_hits_base(spec, to, robot) {
        return to;
    }
    let (mut lo, mut hi) = (from, to);
    for _ in 0..CONSTANTS.bisection_iterations {
        let mid = 0.5 * (lo + hi);
        if panel_hits_base(spec, mid, robot) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Magnetic grasp: succeeds when the tip is near the handle in plane and
/// height. Already holding is left unchanged.
pub fn try_grasp(robot: &RobotState, door: &DoorState) -> GraspState {
    if robot.holding {
        return GraspState { holding: true };
    }
    let tip = gripper_tip_planar(robot);
    let handle = door.spec.handle_planar(door.theta);
    let holding = tip.distance(handle) <= CONSTANTS.grasp_radius
        && (robot.lift - door.spec.handle_height).abs() <= CONSTANTS.grasp_height_band;
    GraspState { holding }
}

/// Opens a push door in proportion to the end-effector motion along the
/// panel's opening normal.
pub fn resolve_push(before: &RobotState, after: &RobotState, door: &DoorState) -> DoorState {
    let spec = &door.spec;
    let theta = door.theta;
    let m = end_effector_planar(after) - end_effector_planar(before);
    let n = spec.opening_normal(theta);
    let panel = spec.panel_segment(theta);
    let tip = gripper_tip_planar(after);

    let in_contact = panel.distance_to_point(tip) <= CONSTANTS.contact_eps
        && (after.lift - spec.handle_height).abs() <= CONSTANTS.push_height_band;
    let along = m.dot(n);
    let len = m.norm();
    if !in_contact || len == 0.0 || along < CONSTANTS.alignment_cos * len {
        return *door;
    }
    let lever = panel
        .closest_point(tip)
        .distance(spec.hinge)
        .max(CONSTANTS.lever_floor);
    let d_theta = (along / lever).clamp(0.0, CONSTANTS.max_step);
    let target = (theta + d_theta).clamp(0.0, spec.theta_max);
    if panel_hits_base(spec, theta, after) {
        return *door;
    }
    DoorState {
        spec: *spec,
        theta: clear_angle(spec, after, theta, target).clamp(theta, spec.theta_max),
    }
}

/// Panel angle at which the handle is closest to the tip, ignoring limits.
fn tracking_angle(spec: &DoorSpec, tip: Vec2) -> f64 {
    let rel = tip - spec.hinge;
    let c = spec.closed_direction;
    spec.swing_sign * c.cross(rel).atan2(c.dot(rel))
}

/// Moves a grasped panel so its handle follows the gripper tip, within one
/// step's rotation budget. Over-stretching breaks the grasp.
pub fn resolve_pull(
    after: &RobotState,
    door: &DoorState,
    grasp: &GraspState,
) -> (DoorState, GraspState) {
    if !grasp.holding {
        return (*door, *grasp);
    }
    let spec = &door.spec;
    let theta = door.theta;
    let tip = gripper_tip_planar(after);
    let lo = (theta - CONSTANTS.max_step).max(0.0);
    let hi = (theta + CONSTANTS.max_step).min(spec.theta_max);
    let desired = tracking_angle(spec, tip).clamp(lo, hi);
    let next = if panel_hits_base(spec, theta, after) {
        theta
    } else {
        clear_angle(spec, after, theta, desired)
    };
    let next = next.clamp(0.0, spec.theta_max);
    let holding = spec.handle_planar(next).distance(tip) <= CONSTANTS.grasp_break;
    (
        DoorState { spec: *spec, theta: next },
        GraspState { holding },
    )
}

/// Removes dirt under the sponge when it sits at table height.
pub fn sweep_dirt(robot: &RobotState, table: &TableSpec, dirt: &DirtField) -> (DirtField, usize) {
    if (robot.lift - table.height).abs() > CONSTANTS.sweep_height_band {
        return (dirt.clone(), 0);
    }
    let tip = gripper_tip_planar(robot);
    let remaining: Vec<Vec2> = dirt
        .remaining
        .iter()
        .copied()
        .filter(|p| p.distance(tip) > CONSTANTS.sponge_radius)
        .collect();
    let removed = dirt.remaining.len() - remaining.len();
    (
        DirtField {
            remaining,
            initial_count: dirt.initial_count,
        },
        removed,
    )
}
