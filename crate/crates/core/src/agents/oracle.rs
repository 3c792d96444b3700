//! Privileged scripted controllers.
//!
//! Both controllers share a navigation layer (grid search plus a
//! line-of-sight path follower) and a local planner that previews a small set
//! of base motions, solves the arm for each, simulates one step and keeps
//! the cheapest outcome.

use crate::env::{advance_physics, Env, TaskKind};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, Vec2};
use crate::interaction::{DoorState, CONSTANTS};
use crate::kinematics::{
    footprint_collides, gripper_tip_planar, ActionCommand, RobotState, EXTENSION_MAX, EXTENSION_MIN,
    LIMITS, MAX_EXTEND, MAX_FORWARD, MAX_LIFT, MAX_ROTATE, MAX_WRIST, RAW_ACTION_DIM,
};
use crate::scene::{DoorKind, DoorMode, DoorSpec, OccupancyGrid, Scene};
use std::f64::consts::{FRAC_PI_2, PI};

/// Clearance added to the base radius when planning paths.
const PLAN_MARGIN: f64 = 0.05;
/// Angle the pull target leads the handle by.
const PULL_LEAD: f64 = 0.12;
const PUSH_LEAD: f64 = 0.12;
const PUSH_CONTACT_RADIUS: f64 = 0.45;
const SIDE_OFFSET: f64 = 0.21;
const TARGET_PATIENCE: usize = 24;

/// Converts a physical command into the raw `[-1, 1]` action that scales back
/// to it.
pub fn command_to_raw(cmd: &ActionCommand) -> [f64; RAW_ACTION_DIM] {
    [
        (cmd.d_forward / MAX_FORWARD).clamp(-1.0, 1.0),
        (cmd.d_rotate / MAX_ROTATE).clamp(-1.0, 1.0),
        (cmd.d_lift / MAX_LIFT).clamp(-1.0, 1.0),
        (cmd.d_extend / MAX_EXTEND).clamp(-1.0, 1.0),
        (cmd.d_wrist / MAX_WRIST).clamp(-1.0, 1.0),
        if cmd.grasp == Some(true) { 1.0 } else { 0.0 },
    ]
}

/// Command exactly as the environment will see it after scaling.
fn quantize(cmd: &ActionCommand, has_grasp: bool) -> ActionCommand {
    let raw = command_to_raw(cmd);
    ActionCommand {
        d_forward: raw[0] * MAX_FORWARD,
        d_rotate: raw[1] * MAX_ROTATE,
        d_lift: raw[2] * MAX_LIFT,
        d_extend: raw[3] * MAX_EXTEND,
        d_wrist: raw[4] * MAX_WRIST,
        grasp: has_grasp.then_some(cmd.grasp == Some(true)),
    }
}

/// Extension and wrist angle placing the tip at `target` from `base`.
/// Of the two wrist branches the one needing the least clamping, then the
/// one nearest `wrist_hint`, wins. The extension is returned unclamped.
pub fn arm_ik(base: &Pose2, target: Vec2, wrist_hint: f64) -> (f64, f64) {
    let h = base.heading();
    let right = -h.perp();
    let q = target - base.position() - h * LIMITS.arm_forward_offset;
    let qh = q.dot(h);
    let qr = q.dot(right);
    let g = LIMITS.gripper_length;
    let lateral = LIMITS.arm_lateral_base;
    if qh.abs() >= g {
        let w = FRAC_PI_2 * qh.signum();
        return (qr - lateral, w);
    }
    let w1 = (qh / g).asin();
    let w2 = wrap_angle(PI - w1);
    let cost = |w: f64| {
        let e = qr - lateral - g * w.cos();
        let over = (EXTENSION_MIN - e).max(0.0) + (e - EXTENSION_MAX).max(0.0);
        (e, 10.0 * over + 0.05 * wrap_angle(w - wrist_hint).abs())
    };
    let (e1, c1) = cost(w1);
    let (e2, c2) = cost(w2);
    if c1 <= c2 {
        (e1, w1)
    } else {
        (e2, w2)
    }
}

/// Arm deltas toward an IK solution, within one step's limits.
fn arm_step(robot: &RobotState, ext: f64, wrist: f64) -> (f64, f64) {
    let ext = ext.clamp(EXTENSION_MIN, EXTENSION_MAX);
    (
        (ext - robot.extension).clamp(-MAX_EXTEND, MAX_EXTEND),
        wrap_angle(wrist - robot.wrist).clamp(-MAX_WRIST, MAX_WRIST),
    )
}

fn lift_step(robot: &RobotState, target: f64) -> f64 {
    (target - robot.lift).clamp(-MAX_LIFT, MAX_LIFT)
}

/// Point at polar `(radius, angle)` around the hinge, with angle measured
/// from the closed panel toward the swing side.
fn door_polar(spec: &DoorSpec, radius: f64, angle: f64) -> Vec2 {
    let d0 = spec.closed_direction;
    let n0 = spec.swing_side();
    spec.hinge + (d0 * angle.cos() + n0 * angle.sin()) * radius
}

/// Finds a grid path from `from` to `to`, inflating obstacles by a safety
/// margin when possible. Endpoints that fall in blocked cells are snapped to
/// the nearest free cell.
fn plan_path(grids: &[OccupancyGrid], from: Vec2, to: Vec2) -> Option<Vec<Vec2>> {
    for g in grids {
        let (Some(a), Some(b)) = (nearest_free(g, from), nearest_free(g, to)) else {
            continue;
        };
        if let Some(mut p) = g.path(a, b) {
            p.push(to);
            return Some(p);
        }
    }
    None
}

fn nearest_free(g: &OccupancyGrid, p: Vec2) -> Option<Vec2> {
    let c = g.cell_of(p)?;
    if g.is_free(c) {
        return Some(p);
    }
    let mut best: Option<(f64, Vec2)> = None;
    for dr in -6i64..=6 {
        for dc in -6i64..=6 {
            let (x, y) = (c.0 as i64 + dc, c.1 as i64 + dr);
            if x < 0 || y < 0 || x as usize >= g.cols || y as usize >= g.rows {
                continue;
            }
            let cell = (x as usize, y as usize);
            if g.is_free(cell) {
                let q = g.center(cell);
                let d = q.distance(p);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
    }
    best.map(|(_, q)| q)
}

/// True when the base disc can slide from `a` to `b` without touching
/// anything.
fn segment_clear(scene: &Scene, theta: f64, a: Vec2, b: Vec2) -> bool {
    let n = (a.distance(b) / 0.04).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let p = a + (b - a) * (i as f64 / n as f64);
        !footprint_collides(&Pose2::new(p.x, p.y, 0.0), scene, theta)
    })
}

/// Base-only command moving along `path` toward its end. Returns `None` once
/// within `tol` of the end.
fn follow_path(
    scene: &Scene,
    theta: f64,
    robot: &RobotState,
    path: &[Vec2],
    tol: f64,
) -> Option<ActionCommand> {
    let b = robot.base.position();
    let goal = *path.last()?;
    if b.distance(goal) <= tol {
        return None;
    }
    // Furthest path point within a short horizon that is in direct sight.
    let nearest = path
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.distance(b).total_cmp(&y.1.distance(b)))
        .map_or(0, |(i, _)| i);
    let mut aim = path[nearest];
    for p in &path[nearest..] {
        if p.distance(b) > 0.6 {
            break;
        }
        if segment_clear(scene, theta, b, *p) {
            aim = *p;
        }
    }
    if aim.distance(b) < 1e-6 {
        aim = goal;
    }
    let to = aim - b;
    let err = wrap_angle(to.angle() - robot.base.theta);
    let mut cmd = ActionCommand::default();
    // Short hops backwards avoid turning around.
    if err.abs() > 2.4 && to.norm() < 0.35 {
        let back = wrap_angle(err - PI);
        cmd.d_rotate = back.clamp(-MAX_ROTATE, MAX_ROTATE);
        if back.abs() <= MAX_ROTATE {
            cmd.d_forward = -to.norm().min(MAX_FORWARD);
        }
    } else {
        cmd.d_rotate = err.clamp(-MAX_ROTATE, MAX_ROTATE);
        if err.abs() <= MAX_ROTATE {
            cmd.d_forward = to.norm().min(MAX_FORWARD);
        }
    }
    let mut shrink = 0;
    while cmd.d_forward != 0.0 {
        let heading = Vec2::from_angle(robot.base.theta + cmd.d_rotate);
        let p = b + heading * cmd.d_forward;
        if !footprint_collides(&Pose2::new(p.x, p.y, 0.0), scene, theta) {
            break;
        }
        shrink += 1;
        cmd.d_forward = if shrink > 4 { 0.0 } else { cmd.d_forward * 0.5 };
    }
    Some(cmd)
}

/// What the local planner aims for on one step.
#[derive(Debug, Clone, Copy)]
struct LocalGoal {
    tip: Vec2,
    lift: f64,
    base: Option<Vec2>,
    heading: Option<f64>,
    grasp: bool,
    /// Weight on increasing the door angle.
    door_gain: f64,
    /// Weight on keeping an existing grasp.
    keep_grasp: f64,
}

/// Scores every candidate base motion after solving the arm for it and
/// simulating one step; returns the best command.
fn local_plan(env: &Env, goal: &LocalGoal, base_moves: &[(f64, f64)]) -> ActionCommand {
    let robot = &env.robot;
    let has_grasp = env.task.has_grasp();
    let theta0 = env.door_theta();
    let mut best: Option<(f64, ActionCommand)> = None;
    for &(f, r) in base_moves {
        let th = wrap_angle(robot.base.theta + r);
        let p = robot.base.position() + Vec2::from_angle(th) * f;
        let pose = Pose2::new(p.x, p.y, th);
        if (f != 0.0 || r != 0.0) && footprint_collides(&pose, &env.scene, theta0) {
            continue;
        }
        let (e, w) = arm_ik(&pose, goal.tip, robot.wrist);
        let (de, dw) = arm_step(robot, e, w);
        let cmd = quantize(
            &ActionCommand {
                d_forward: f,
                d_rotate: r,
                d_lift: lift_step(robot, goal.lift),
                d_extend: de,
                d_wrist: dw,
                grasp: Some(goal.grasp),
            },
            has_grasp,
        );
        let out = advance_physics(&env.scene, robot, env.door, &cmd);
        let after = out.robot;
        let mut cost = gripper_tip_planar(&after).distance(goal.tip);
        cost += 0.02 * (e - 0.26).abs();
        if let Some(b) = goal.base {
            cost += 2.0 * after.base.position().distance(b);
        }
        if let Some(hd) = goal.heading {
            cost += 0.3 * wrap_angle(after.base.theta - hd).abs();
        }
        if let Some(d) = out.door {
            cost -= goal.door_gain * (d.theta - theta0);
        }
        if robot.holding && !after.holding {
            cost += goal.keep_grasp;
        }
        if !out.valid {
            cost += 1.0;
        }
        cost += 0.001 * (f.abs() + r.abs());
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, cmd));
        }
    }
    best.map_or_else(ActionCommand::default, |(_, c)| c)
}

fn grid_moves(forward: &[f64], rotate: &[f64]) -> Vec<(f64, f64)> {
    forward
        .iter()
        .flat_map(|f| rotate.iter().map(move |r| (*f, *r)))
        .collect()
}

/// Execution status of a scripted controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControllerStatus {
    Running,
    /// The controller could not find a plan and emits zero actions.
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Navigate,
    Manipulate,
}

/// One straight line along a table edge the base drives on, with the table
/// on the robot's right.
#[derive(Debug, Clone, Copy)]
struct SideLine {
    start: Vec2,
    end: Vec2,
    heading: f64,
    /// Outward normal of the edge.
    normal: Vec2,
    edge_point: Vec2,
}

impl SideLine {
    fn depth(&self, p: Vec2) -> f64 {
        (self.edge_point - p).dot(self.normal)
    }

    /// Closest point on the line to `p`.
    fn project(&self, p: Vec2) -> Vec2 {
        crate::geometry::Segment::new(self.start, self.end).closest_point(p)
    }
}

fn table_sides(env: &Env) -> Vec<SideLine> {
    let Some(t) = &env.scene.table else { return Vec::new() };
    let r = t.rect;
    let horizontal = r.width() >= r.height();
    let over = 0.12;
    // Each long edge, traversed with the table on the right-hand side.
    let mut out = Vec::new();
    if horizontal {
        let y_lo = r.min.y - SIDE_OFFSET;
        let y_hi = r.max.y + SIDE_OFFSET;
        out.push(SideLine {
            start: Vec2::new(r.max.x + over, y_lo),
            end: Vec2::new(r.min.x - over, y_lo),
            heading: PI,
            normal: Vec2::new(0.0, -1.0),
            edge_point: Vec2::new(r.min.x, r.min.y),
        });
        out.push(SideLine {
            start: Vec2::new(r.min.x - over, y_hi),
            end: Vec2::new(r.max.x + over, y_hi),
            heading: 0.0,
            normal: Vec2::new(0.0, 1.0),
            edge_point: Vec2::new(r.min.x, r.max.y),
        });
    } else {
        let x_lo = r.min.x - SIDE_OFFSET;
        let x_hi = r.max.x + SIDE_OFFSET;
        out.push(SideLine {
            start: Vec2::new(x_lo, r.min.y - over),
            end: Vec2::new(x_lo, r.max.y + over),
            heading: FRAC_PI_2,
            normal: Vec2::new(-1.0, 0.0),
            edge_point: Vec2::new(r.min.x, r.min.y),
        });
        out.push(SideLine {
            start: Vec2::new(x_hi, r.max.y + over),
            end: Vec2::new(x_hi, r.min.y - over),
            heading: -FRAC_PI_2,
            normal: Vec2::new(1.0, 0.0),
            edge_point: Vec2::new(r.max.x, r.min.y),
        });
    }
    out
}

/// Full-state scripted controller that solves every task when the scene
/// allows it. With `freeze_at_reach` set it becomes the two-stage baseline:
/// navigation only until the base is within the reach radius, then arm only
/// with the base locked for the rest of the episode.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    freeze_at_reach: bool,
    status: ControllerStatus,
    phase: Phase,
    grids: Vec<OccupancyGrid>,
    path: Option<Vec<Vec2>>,
    staging: Option<Pose2>,
    sides: Vec<SideLine>,
    side: usize,
    target: Option<(Vec2, usize)>,
    skipped: Vec<Vec2>,
    base_locked: bool,
    scene_key: Option<(u64, TaskKind)>,
}

impl ScriptedPlanner {
    pub fn oracle() -> Self {
        Self::new(false)
    }

    pub fn two_stage() -> Self {
        Self::new(true)
    }

    fn new(freeze_at_reach: bool) -> Self {
        Self {
            freeze_at_reach,
            status: ControllerStatus::Running,
            phase: Phase::Navigate,
            grids: Vec::new(),
            path: None,
            staging: None,
            sides: Vec::new(),
            side: 0,
            target: None,
            skipped: Vec::new(),
            base_locked: false,
            scene_key: None,
        }
    }

    pub fn status(&self) -> &ControllerStatus {
        &self.status
    }

    /// True once the two-stage switch has happened.
    pub fn base_locked(&self) -> bool {
        self.base_locked
    }

    /// Clears per-episode state; occupancy grids are kept while the scene is
    /// unchanged.
    pub fn reset(&mut self) {
        let grids = std::mem::take(&mut self.grids);
        let key = self.scene_key;
        *self = Self::new(self.freeze_at_reach);
        self.grids = grids;
        self.scene_key = key;
    }

    pub fn act(&mut self, env: &Env) -> Result<[f64; RAW_ACTION_DIM]> {
        if env.steps == 0 {
            self.reset();
        }
        let key = (env.scene.seed, env.task);
        if self.scene_key != Some(key) || self.grids.is_empty() {
            self.grids = [LIMITS.base_radius + PLAN_MARGIN, LIMITS.base_radius + 0.01]
                .iter()
                .map(|r| OccupancyGrid::build_with_radius(&env.scene, 0.0, *r))
                .collect();
            self.scene_key = Some(key);
        }
        if let ControllerStatus::Failed(_) = self.status {
            return Ok([0.0; RAW_ACTION_DIM]);
        }
        let cmd = match self.plan(env) {
            Ok(c) => c,
            Err(Error::Controller(msg)) => {
                self.status = ControllerStatus::Failed(msg);
                ActionCommand::default()
            }
            Err(e) => return Err(e),
        };
        let mut cmd = quantize(&cmd, env.task.has_grasp());
        if self.base_locked {
            cmd.d_forward = 0.0;
            cmd.d_rotate = 0.0;
        }
        Ok(command_to_raw(&cmd))
    }

    fn plan(&mut self, env: &Env) -> Result<ActionCommand> {
        if self.freeze_at_reach && !self.base_locked && env.base_distance() <= env.weights.d_reach {
            self.base_locked = true;
            self.phase = Phase::Manipulate;
        }
        match env.scene.door {
            Some(spec) => self.plan_door(env, &spec),
            None => self.plan_table(env),
        }
    }

    fn staging_for(&self, env: &Env, spec: &DoorSpec) -> Result<Pose2> {
        let candidates: Vec<(f64, f64)> = match (spec.kind, spec.mode) {
            (_, DoorMode::Push) => vec![(0.36, -0.98), (0.42, -1.05), (0.33, -0.9), (0.45, -1.1)],
            (DoorKind::Door, DoorMode::Pull) => {
                vec![(1.12, 0.78), (1.15, 0.7), (1.2, 0.9), (1.12, 0.6), (1.25, 0.75)]
            }
            (DoorKind::Fridge, DoorMode::Pull) => {
                vec![(0.85, 0.7), (0.85, 0.6), (0.9, 0.8), (0.82, 0.55), (0.95, 0.7)]
            }
        };
        let b = env.robot.base.position();
        for (radius, angle) in candidates {
            let p = door_polar(spec, radius, angle);
            let pose = Pose2::new(p.x, p.y, 0.0);
            if footprint_collides(&pose, &env.scene, 0.0) {
                continue;
            }
            if plan_path(&self.grids, b, p).is_some() {
                let handle = spec.handle_planar(0.0);
                let heading = self.preferred_heading(&pose, handle);
                return Ok(Pose2::new(p.x, p.y, heading));
            }
        }
        Err(Error::Controller("no reachable staging pose near the target".into()))
    }

    /// Heading that puts `target` at a comfortable spot on the arm side.
    fn preferred_heading(&self, base: &Pose2, target: Vec2) -> f64 {
        let to = target - base.position();
        let lateral = (to.norm().powi(2) - 0.01).max(0.0).sqrt();
        wrap_angle(to.angle() - (-lateral).atan2(LIMITS.arm_forward_offset))
    }

    fn navigate(
        &mut self,
        env: &Env,
        goal: Vec2,
        tol: f64,
        lift: f64,
    ) -> Result<Option<ActionCommand>> {
        let b = env.robot.base.position();
        if self.path.is_none() {
            let path = plan_path(&self.grids, b, goal)
                .ok_or_else(|| Error::Controller("no path to the target".into()))?;
            self.path = Some(path);
        }
        let path = self.path.as_ref().expect("path planned above");
        match follow_path(&env.scene, env.door_theta(), &env.robot, path, tol) {
            Some(mut cmd) => {
                cmd.d_lift = lift_step(&env.robot, lift);
                Ok(Some(cmd))
            }
            None => {
                self.path = None;
                Ok(None)
            }
        }
    }

    fn plan_door(&mut self, env: &Env, spec: &DoorSpec) -> Result<ActionCommand> {
        let lift = spec.handle_height;
        if self.staging.is_none() {
            self.staging = Some(self.staging_for(env, spec)?);
        }
        let staging = self.staging.expect("staging set above");
        if self.phase == Phase::Navigate {
            let near = env.robot.base.position().distance(staging.position()) < 0.08;
            if !near {
                if let Some(cmd) = self.navigate(env, staging.position(), 0.06, lift)? {
                    return Ok(cmd);
                }
            }
            self.phase = Phase::Manipulate;
        }
        let door = env.door.expect("door scene has a door state");
        let moves = if self.base_locked {
            vec![(0.0, 0.0)]
        } else {
            grid_moves(
                &[-0.04, 0.0, 0.04],
                &[-0.3, -0.15, -0.06, -0.02, 0.0, 0.02, 0.06, 0.15, 0.3],
            )
        };
        let base = (!self.base_locked).then(|| staging.position());
        let goal = match spec.mode {
            DoorMode::Push => self.push_goal(&door, lift, base),
            DoorMode::Pull => self.pull_goal(env, &door, lift, base),
        };
        Ok(local_plan(env, &goal, &moves))
    }

    fn push_goal(&self, door: &DoorState, lift: f64, base: Option<Vec2>) -> LocalGoal {
        let spec = &door.spec;
        let ahead = (door.theta + PUSH_LEAD).min(spec.theta_max);
        let tip = spec.hinge + spec.panel_direction(ahead) * PUSH_CONTACT_RADIUS
            - spec.opening_normal(ahead) * 0.02;
        LocalGoal {
            tip,
            lift,
            base,
            heading: None,
            grasp: false,
            door_gain: 2.0,
            keep_grasp: 0.0,
        }
    }

    fn pull_goal(&self, env: &Env, door: &DoorState, lift: f64, base: Option<Vec2>) -> LocalGoal {
        let spec = &door.spec;
        let holding = env.robot.holding;
        let tip = if holding {
            let ahead = (door.theta + PULL_LEAD).min(spec.theta_max);
            spec.hinge + spec.panel_direction(ahead) * (spec.handle_radius() - 0.03)
        } else {
            spec.handle_planar(door.theta)
        };
        let near = gripper_tip_planar(&env.robot).distance(spec.handle_planar(door.theta))
            <= CONSTANTS.grasp_radius;
        LocalGoal {
            tip,
            lift,
            base,
            heading: None,
            grasp: holding || near,
            door_gain: if holding { 2.0 } else { 0.0 },
            keep_grasp: 1.0,
        }
    }

    fn plan_table(&mut self, env: &Env) -> Result<ActionCommand> {
        let table = env
            .scene
            .table
            .as_ref()
            .ok_or_else(|| Error::Controller("scene has neither door nor table".into()))?;
        let lift = table.height;
        let dirt = env.dirt.as_ref().map_or(&[][..], |d| &d.remaining[..]);
        if self.sides.is_empty() {
            self.sides = table_sides(env);
            let b = env.robot.base.position();
            self.side = (0..self.sides.len())
                .min_by(|i, j| {
                    let di = self.sides[*i].project(b).distance(b);
                    let dj = self.sides[*j].project(b).distance(b);
                    di.total_cmp(&dj)
                })
                .unwrap_or(0);
        }
        let reachable = |s: &SideLine, p: &Vec2| {
            let other = self.sides.iter().map(|o| o.depth(*p)).fold(f64::INFINITY, f64::min);
            s.depth(*p) <= other + 1e-9
        };
        if self.base_locked {
            // Arm only: chase whatever dirt is nearest the sponge.
            let tip = gripper_tip_planar(&env.robot);
            let target = dirt
                .iter()
                .filter(|p| !self.skipped.contains(p))
                .min_by(|a, b| a.distance(tip).total_cmp(&b.distance(tip)))
                .copied();
            return Ok(self.clean_toward(env, target, lift, None, &[(0.0, 0.0)]));
        }
        let side = self.sides[self.side];
        let mine: Vec<Vec2> = dirt
            .iter()
            .filter(|p| reachable(&side, p) && !self.skipped.contains(p))
            .copied()
            .collect();
        if mine.is_empty() {
            let other = (self.side + 1) % self.sides.len();
            let remaining = dirt
                .iter()
                .any(|p| reachable(&self.sides[other], p) && !self.skipped.contains(p));
            if remaining && other != self.side {
                self.side = other;
                self.phase = Phase::Navigate;
                self.path = None;
                self.target = None;
                return self.plan_table(env);
            }
            return Ok(ActionCommand::default());
        }
        if self.phase == Phase::Navigate {
            let b = env.robot.base.position();
            let entry = if b.distance(side.start) <= b.distance(side.end) { side.start } else { side.end };
            let on_line = side.project(b).distance(b) < 0.06;
            if !on_line {
                if let Some(mut cmd) = self.navigate(env, entry, 0.05, lift)? {
                    let (e, w) = arm_ik(&env.robot.base, table.rect.center(), env.robot.wrist);
                    (cmd.d_extend, cmd.d_wrist) = arm_step(&env.robot, e.min(0.2), w);
                    return Ok(cmd);
                }
            }
            let err = wrap_angle(side.heading - env.robot.base.theta);
            if err.abs() > 0.05 {
                return Ok(ActionCommand {
                    d_rotate: err.clamp(-MAX_ROTATE, MAX_ROTATE),
                    d_lift: lift_step(&env.robot, lift),
                    ..Default::default()
                });
            }
            self.phase = Phase::Manipulate;
        }
        // Drop the current target once it is gone or overdue.
        if let Some((p, since)) = self.target {
            let gone = !mine.contains(&p);
            if gone || env.steps.saturating_sub(since) > TARGET_PATIENCE {
                if !gone {
                    self.skipped.push(p);
                }
                self.target = None;
            }
        }
        if self.target.is_none() {
            let robot = &env.robot;
            let b = robot.base.position();
            let dir = Vec2::from_angle(side.heading);
            let pick = mine
                .iter()
                .map(|p| {
                    let along = (*p - b).dot(dir) - LIMITS.arm_forward_offset;
                    let lateral = side.depth(*p) + SIDE_OFFSET;
                    let ext = lateral - LIMITS.arm_lateral_base - LIMITS.gripper_length;
                    let t = (along.abs() / MAX_FORWARD)
                        .max((ext - robot.extension).abs() / MAX_EXTEND);
                    (t + 0.01 * along.abs(), *p)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p);
            self.target = pick.map(|p| (p, env.steps));
        }
        let target = self.target.map(|(p, _)| p);
        let b = env.robot.base.position();
        let anchor = target.map(|p| {
            let dir = Vec2::from_angle(side.heading);
            let along = (p - b).dot(dir) - LIMITS.arm_forward_offset;
            side.project(b + dir * along)
        });
        let moves = grid_moves(
            &[-0.2, -0.12, -0.06, -0.02, 0.0, 0.02, 0.06, 0.12, 0.2],
            &[-0.04, 0.0, 0.04],
        );
        let heading = Some(side.heading);
        let mut goal_cmd = self.clean_toward(env, target, lift, anchor.map(|a| (a, heading)), &moves);
        goal_cmd.grasp = None;
        Ok(goal_cmd)
    }

    fn clean_toward(
        &self,
        env: &Env,
        target: Option<Vec2>,
        lift: f64,
        base: Option<(Vec2, Option<f64>)>,
        moves: &[(f64, f64)],
    ) -> ActionCommand {
        let Some(tip) = target else {
            return ActionCommand {
                d_lift: lift_step(&env.robot, lift),
                ..Default::default()
            };
        };
        let goal = LocalGoal {
            tip,
            lift,
            base: base.map(|(b, _)| b),
            heading: base.and_then(|(_, h)| h),
            grasp: false,
            door_gain: 0.0,
            keep_grasp: 0.0,
        };
        local_plan(env, &goal, moves)
    }
}
