//! Seeded procedural scenes: rooms, walls, the task's target object, box
//! obstacles and spawn poses.
//!
//! Every scene is a pure function of `(task, seed)`. Independent random
//! streams are used per purpose (layout, obstacles, dirt, orientation), so a
//! change to one sampler never perturbs the others.

use crate::env::TaskKind;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, Rect, Segment, Vec2};
use crate::kinematics::{disc_collides, footprint_collides, LIMITS};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

pub const GENERATOR_VERSION: u32 = 1;
pub const SCENE_FORMAT_VERSION: u32 = 1;

pub const MAX_ATTEMPTS: usize = 100;
pub const GRID_RESOLUTION: f64 = 0.05;
pub const THETA_MAX: f64 = 1.745;
pub const DOOR_WIDTH: f64 = 0.9;
pub const FRIDGE_WIDTH: f64 = 0.6;
pub const HANDLE_FRACTION: f64 = 0.8;
pub const HANDLE_HEIGHT: f64 = 0.95;
pub const TABLE_HEIGHT: f64 = 0.75;
pub const DIRT_COUNT_RANGE: [u32; 2] = [20, 60];
pub const ROOM_SIDE_RANGE: [f64; 2] = [3.0, 6.0];
pub const CORRIDOR: f64 = 0.8;
pub const TABLE_CLEARANCE: f64 = 0.7;
pub const FRIDGE_CLEARANCE_RANGE: [f64; 2] = [0.8, 1.5];

/// Widest band any spawn sampler accepts.
pub const GENERABLE_BAND: SpawnBand = SpawnBand { d_min: 1.0, d_max: 4.0 };

/// Purposes for the independent random streams.
mod stream {
    pub const LAYOUT: u64 = 1;
    pub const OBSTACLES: u64 = 2;
    pub const DIRT: u64 = 3;
    pub const ORIENTATION: u64 = 4;
    pub const SPAWN: u64 = 5;
}

/// Deterministic random stream for `(seed, purpose)`.
pub fn substream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorKind {
    Door,
    Fridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorMode {
    Push,
    Pull,
}

/// Hinged panel shared by doors and fridges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub hinge: Vec2,
    pub panel_width: f64,
    /// Unit vector from the hinge along the closed panel.
    pub closed_direction: Vec2,
    /// +1 opens counter-clockwise, -1 clockwise.
    pub swing_sign: f64,
    pub theta_max: f64,
    pub handle_fraction: f64,
    pub handle_height: f64,
    pub kind: DoorKind,
    pub mode: DoorMode,
}

impl DoorSpec {
    pub fn panel_direction(&self, theta: f64) -> Vec2 {
        self.closed_direction.rotate(self.swing_sign * theta)
    }

    pub fn panel_segment(&self, theta: f64) -> Segment {
        Segment::new(
            self.hinge,
            self.hinge + self.panel_direction(theta) * self.panel_width,
        )
    }

    /// Normal of the panel pointing the way it moves while opening.
    pub fn opening_normal(&self, theta: f64) -> Vec2 {
        self.panel_direction(theta).perp() * self.swing_sign
    }

    pub fn handle_radius(&self) -> f64 {
        self.handle_fraction * self.panel_width
    }

    pub fn handle_planar(&self, theta: f64) -> Vec2 {
        self.hinge + self.panel_direction(theta) * self.handle_radius()
    }

    /// The side of the closed panel the door swings into.
    pub fn swing_side(&self) -> Vec2 {
        self.opening_normal(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub rect: Rect,
    pub height: f64,
    pub dirt: Vec<Vec2>,
    pub dirt_count_range: [u32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnBand {
    pub d_min: f64,
    pub d_max: f64,
}

impl SpawnBand {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min.is_finite() && d_max.is_finite() && 0.0 < d_min && d_min < d_max) {
            return Err(Error::Config(format!(
                "spawn band [{d_min}, {d_max}] must satisfy 0 < d_min < d_max"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::CleanTable => SpawnBand { d_min: 1.0, d_max: 4.0 },
            _ => SpawnBand { d_min: 1.0, d_max: 3.0 },
        }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.d_min && d <= self.d_max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.d_min + self.d_max)
    }

    /// Rejects bands outside what the samplers can produce.
    pub fn check_generable(&self) -> Result<()> {
        if self.d_min < GENERABLE_BAND.d_min || self.d_max > GENERABLE_BAND.d_max {
            return Err(Error::Config(format!(
                "band [{}, {}] outside spawnable range [{}, {}]",
                self.d_min, self.d_max, GENERABLE_BAND.d_min, GENERABLE_BAND.d_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub version: u32,
    pub generator_version: u32,
    pub task: TaskKind,
    pub seed: u64,
    /// Room the robot is spawned in.
    pub spawn_room: usize,
    pub rooms: Vec<Rect>,
    pub walls: Vec<Segment>,
    pub door: Option<DoorSpec>,
    pub table: Option<TableSpec>,
    /// Fixed furniture belonging to the target (fridge cabinet, counter).
    pub fixtures: Vec<Rect>,
    pub obstacles: Vec<Rect>,
}

impl Scene {
    /// Rectangles the base may not overlap.
    pub fn solid_rects(&self) -> impl Iterator<Item = &Rect> {
        self.table
            .iter()
            .map(|t| &t.rect)
            .chain(self.fixtures.iter())
            .chain(self.obstacles.iter())
    }

    pub fn bounds(&self) -> Rect {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in &self.rooms {
            min = Vec2::new(min.x.min(r.min.x), min.y.min(r.min.y));
            max = Vec2::new(max.x.max(r.max.x), max.y.max(r.max.y));
        }
        Rect { min, max }
    }

    pub fn room_containing(&self, p: Vec2) -> Option<usize> {
        self.rooms.iter().position(|r| r.strictly_contains(p))
    }

    /// Planar target reference point: the handle for doors/fridges, the
    /// nearest table-boundary point from `from` for tables.
    pub fn target_reference(&self, from: Vec2, door_theta: f64) -> Vec2 {
        match (&self.door, &self.table) {
            (Some(d), _) => d.handle_planar(door_theta),
            (None, Some(t)) => t.rect.closest_boundary_point(from),
            _ => from,
        }
    }

    pub fn target_distance(&self, from: Vec2, door_theta: f64) -> f64 {
        self.target_reference(from, door_theta).distance(from)
    }

    /// A free point in front of the target that the base can occupy.
    pub fn reach_goal(&self, from: Vec2) -> Vec2 {
        match (&self.door, &self.table) {
            (Some(d), _) => {
                let side = match d.mode {
                    DoorMode::Push => -d.swing_side(),
                    DoorMode::Pull => d.swing_side(),
                };
                d.handle_planar(0.0) + side * 0.5
            }
            (None, Some(t)) => {
                let b = t.rect.closest_boundary_point(from);
                let out = (b - t.rect.center()).normalized();
                let edge_out = if (b.x - t.rect.min.x).abs() < 1e-9 {
                    Vec2::new(-1.0, 0.0)
                } else if (b.x - t.rect.max.x).abs() < 1e-9 {
                    Vec2::new(1.0, 0.0)
                } else if (b.y - t.rect.min.y).abs() < 1e-9 {
                    Vec2::new(0.0, -1.0)
                } else if (b.y - t.rect.max.y).abs() < 1e-9 {
                    Vec2::new(0.0, 1.0)
                } else {
                    out
                };
                b + edge_out * 0.35
            }
            _ => from,
        }
    }

    /// Structural validity: target matches task, rooms disjoint, dirt inside
    /// the table, door panel inside a wall gap.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(Error::Validation(format!("scene {} ({}): {m}", self.seed, self.task)))
        };
        match self.task {
            TaskKind::DoorPush | TaskKind::DoorPull => {
                let Some(d) = self.door else { return bad("door task without a door") };
                if d.kind != DoorKind::Door || self.table.is_some() {
                    return bad("door task target mismatch");
                }
                let want = if self.task == TaskKind::DoorPush { DoorMode::Push } else { DoorMode::Pull };
                if d.mode != want {
                    return bad("door mode does not match task");
                }
                if self.rooms.len() != 2 {
                    return bad("door tasks need exactly two rooms");
                }
            }
            TaskKind::OpenFridge => {
                let Some(d) = self.door else { return bad("fridge task without a fridge") };
                if d.kind != DoorKind::Fridge || self.table.is_some() {
                    return bad("fridge task target mismatch");
                }
            }
            TaskKind::CleanTable => {
                let Some(t) = &self.table else { return bad("table task without a table") };
                if self.door.is_some() {
                    return bad("table task has a door");
                }
                let n = t.dirt.len() as u32;
                if n < t.dirt_count_range[0] || n > t.dirt_count_range[1] {
                    return bad("dirt count out of range");
                }
                if !t.dirt.iter().all(|p| t.rect.strictly_contains(*p)) {
                    return bad("dirt outside table");
                }
            }
        }
        for (i, a) in self.rooms.iter().enumerate() {
            for b in &self.rooms[i + 1..] {
                if a.intersects(b) {
                    return bad("rooms overlap");
                }
            }
        }
        for w in &self.walls {
            let on_boundary = self.rooms.iter().any(|r| {
                r.edges().iter().any(|e| {
                    e.distance_to_point(w.a) < 1e-6 && e.distance_to_point(w.b) < 1e-6
                })
            });
            if !on_boundary {
                return bad("wall segment off room boundaries");
            }
        }
        if let Some(d) = &self.door {
            let closed = d.panel_segment(0.0);
            let mid = (closed.a + closed.b) * 0.5;
            if self.walls.iter().any(|w| w.distance_to_point(mid) < 1e-6) {
                return bad("door panel not inside a wall gap");
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Cuts `[gap_lo, gap_hi]` (along the wall's varying axis) out of a
/// wall-aligned segment.
fn cut_gap(seg: Segment, gap_lo: Vec2, gap_hi: Vec2) -> Vec<Segment> {
    let dir = (seg.b - seg.a).normalized();
    let len = seg.length();
    let t0 = (gap_lo - seg.a).dot(dir);
    let t1 = (gap_hi - seg.a).dot(dir);
    let (t0, t1) = (t0.min(t1), t0.max(t1));
    let on_line = seg.distance_to_point(gap_lo) < 1e-9 || (gap_lo - seg.a).cross(dir).abs() < 1e-9;
    if !on_line || t1 <= 0.0 || t0 >= len {
        return vec![seg];
    }
    let mut out = Vec::new();
    if t0 > 1e-9 {
        out.push(Segment::new(seg.a, seg.a + dir * t0));
    }
    if t1 < len - 1e-9 {
        out.push(Segment::new(seg.a + dir * t1, seg.b));
    }
    out
}

fn room_walls(rooms: &[Rect], gaps: &[(Vec2, Vec2)]) -> Vec<Segment> {
    let mut walls: Vec<Segment> = rooms.iter().flat_map(|r| r.edges()).collect();
    for (lo, hi) in gaps {
        walls = walls.into_iter().flat_map(|w| cut_gap(w, *lo, *hi)).collect();
    }
    walls
}

/// Keep-out zone an obstacle must stay clear of.
enum KeepOut {
    Rect(Rect, f64),
    Point(Vec2, f64),
}

fn place_obstacles(
    rng: &mut ChaCha8Rng,
    rooms: &[Rect],
    keep_out: &[KeepOut],
) -> Vec<Rect> {
    let count = rng.gen_range(0..=3);
    let mut placed: Vec<Rect> = Vec::new();
    for _ in 0..count {
        for _ in 0..20 {
            let room = rooms[rng.gen_range(0..rooms.len())];
            let w = uniform(rng, 0.3, 0.8);
            let h = uniform(rng, 0.3, 0.8);
            let inner = room.inflate(-CORRIDOR);
            if inner.width() < w || inner.height() < h {
                continue;
            }
            let x = uniform(rng, inner.min.x, inner.max.x - w);
            let y = uniform(rng, inner.min.y, inner.max.y - h);
            let r = Rect::from_corners(Vec2::new(x, y), Vec2::new(x + w, y + h));
            let clear_keep = keep_out.iter().all(|k| match k {
                KeepOut::Rect(z, m) => r.distance_to_rect(z) >= *m,
                KeepOut::Point(p, m) => r.distance_to_point(*p) >= *m,
            });
            let clear_others = placed.iter().all(|o| r.distance_to_rect(o) >= CORRIDOR);
            if clear_keep && clear_others {
                placed.push(r);
                break;
            }
        }
    }
    placed
}

/// Rigid orientation applied to a canonical layout: rotation by `k·90°`
/// about the origin, optionally preceded by a mirror across the y axis.
#[derive(Clone, Copy)]
struct Orientation {
    quarter_turns: u8,
    mirror: bool,
}

impl Orientation {
    fn point(&self, p: Vec2) -> Vec2 {
        let p = if self.mirror { Vec2::new(-p.x, p.y) } else { p };
        match self.quarter_turns % 4 {
            0 => p,
            1 => Vec2::new(-p.y, p.x),
            2 => Vec2::new(-p.x, -p.y),
            _ => Vec2::new(p.y, -p.x),
        }
    }

    fn dir(&self, v: Vec2) -> Vec2 {
        self.point(v)
    }

    fn rect(&self, r: &Rect) -> Rect {
        Rect::from_corners(self.point(r.min), self.point(r.max))
    }

    fn seg(&self, s: &Segment) -> Segment {
        Segment::new(self.point(s.a), self.point(s.b))
    }

    fn apply(&self, scene: &mut Scene) {
        scene.rooms = scene.rooms.iter().map(|r| self.rect(r)).collect();
        scene.walls = scene.walls.iter().map(|s| self.seg(s)).collect();
        scene.fixtures = scene.fixtures.iter().map(|r| self.rect(r)).collect();
        scene.obstacles = scene.obstacles.iter().map(|r| self.rect(r)).collect();
        if let Some(d) = scene.door.as_mut() {
            d.hinge = self.point(d.hinge);
            d.closed_direction = self.dir(d.closed_direction);
            if self.mirror {
                d.swing_sign = -d.swing_sign;
            }
        }
        if let Some(t) = scene.table.as_mut() {
            t.rect = self.rect(&t.rect);
            t.dirt = t.dirt.iter().map(|p| self.point(*p)).collect();
        }
    }
}

fn door_scene(task: TaskKind, seed: u64, layout: &mut ChaCha8Rng, obst: &mut ChaCha8Rng) -> Scene {
    let [lo, hi] = ROOM_SIDE_RANGE;
    let (wa, ha) = (uniform(layout, lo, hi), uniform(layout, lo, hi));
    let (wb, hb) = (uniform(layout, lo, hi), uniform(layout, lo, hi));
    // Vertical offset keeps at least 3 m of shared wall.
    let yb = uniform(layout, 3.0 - hb, ha - 3.0);
    let room_a = Rect::from_corners(Vec2::new(0.0, 0.0), Vec2::new(wa, ha));
    let room_b = Rect::from_corners(Vec2::new(wa, yb), Vec2::new(wa + wb, yb + hb));
    let ov_lo = yb.max(0.0);
    let ov_hi = (yb + hb).min(ha);
    let g0 = uniform(layout, ov_lo + 1.0, ov_hi - 1.0 - DOOR_WIDTH);
    let gap_lo = Vec2::new(wa, g0);
    let gap_hi = Vec2::new(wa, g0 + DOOR_WIDTH);
    let hinge_low = layout.gen_bool(0.5);
    let (hinge, closed) = if hinge_low {
        (gap_lo, Vec2::new(0.0, 1.0))
    } else {
        (gap_hi, Vec2::new(0.0, -1.0))
    };
    let mode = if task == TaskKind::DoorPush { DoorMode::Push } else { DoorMode::Pull };
    // Push swings away from the robot's room (A); pull swings into it.
    let swing_side = match mode {
        DoorMode::Push => Vec2::new(1.0, 0.0),
        DoorMode::Pull => Vec2::new(-1.0, 0.0),
    };
    let swing_sign = closed.cross(swing_side).signum();
    let door = DoorSpec {
        hinge,
        panel_width: DOOR_WIDTH,
        closed_direction: closed,
        swing_sign,
        theta_max: THETA_MAX,
        handle_fraction: HANDLE_FRACTION,
        handle_height: HANDLE_HEIGHT,
        kind: DoorKind::Door,
        mode,
    };
    let rooms = vec![room_a, room_b];
    let walls = room_walls(&rooms, &[(gap_lo, gap_hi)]);
    let gap_mid = (gap_lo + gap_hi) * 0.5;
    let keep = [
        KeepOut::Point(hinge, DOOR_WIDTH + CORRIDOR),
        KeepOut::Point(gap_mid, 1.4),
    ];
    let obstacles = place_obstacles(obst, &rooms, &keep);
    Scene {
        version: SCENE_FORMAT_VERSION,
        generator_version: GENERATOR_VERSION,
        task,
        seed,
        spawn_room: 0,
        rooms,
        walls,
        door: Some(door),
        table: None,
        fixtures: Vec::new(),
        obstacles,
    }
}

fn fridge_scene(seed: u64, layout: &mut ChaCha8Rng, obst: &mut ChaCha8Rng) -> Scene {
    let [lo, hi] = ROOM_SIDE_RANGE;
    let depth = 0.7;
    let body_w = 0.7;
    let counter_depth = 0.5;
    let clearance = uniform(layout, FRIDGE_CLEARANCE_RANGE[0], FRIDGE_CLEARANCE_RANGE[1]);
    let w = uniform(layout, lo, hi);
    let h = uniform(layout, (depth + clearance + counter_depth + CORRIDOR).max(lo), hi);
    let fx = uniform(layout, 0.9, w - body_w - 0.9);
    let body = Rect::from_corners(Vec2::new(fx, 0.0), Vec2::new(fx + body_w, depth));
    let left_hinge = layout.gen_bool(0.5);
    let (hinge, closed) = if left_hinge {
        (Vec2::new(fx, depth), Vec2::new(1.0, 0.0))
    } else {
        (Vec2::new(fx + body_w, depth), Vec2::new(-1.0, 0.0))
    };
    let swing_sign = closed.cross(Vec2::new(0.0, 1.0)).signum();
    let a = uniform(layout, 0.0, 0.5f64.min(fx - CORRIDOR));
    let b = uniform(layout, 0.0, 0.5f64.min(w - CORRIDOR - fx - body_w));
    let counter = Rect::from_corners(
        Vec2::new(fx - a, depth + clearance),
        Vec2::new(fx + body_w + b, depth + clearance + counter_depth),
    );
    let door = DoorSpec {
        hinge,
        panel_width: FRIDGE_WIDTH,
        closed_direction: closed,
        swing_sign,
        theta_max: THETA_MAX,
        handle_fraction: HANDLE_FRACTION,
        handle_height: HANDLE_HEIGHT,
        kind: DoorKind::Fridge,
        mode: DoorMode::Pull,
    };
    let room = Rect::from_corners(Vec2::ZERO, Vec2::new(w, h));
    let rooms = vec![room];
    let walls = room_walls(&rooms, &[]);
    let keep = [
        KeepOut::Rect(body, CORRIDOR),
        KeepOut::Rect(counter, CORRIDOR),
        KeepOut::Point(hinge, FRIDGE_WIDTH + CORRIDOR),
    ];
    let obstacles = place_obstacles(obst, &rooms, &keep);
    Scene {
        version: SCENE_FORMAT_VERSION,
        generator_version: GENERATOR_VERSION,
        task: TaskKind::OpenFridge,
        seed,
        spawn_room: 0,
        rooms,
        walls,
        door: Some(door),
        table: None,
        fixtures: vec![body, counter],
        obstacles,
    }
}

fn table_scene(
    seed: u64,
    layout: &mut ChaCha8Rng,
    obst: &mut ChaCha8Rng,
    dirt_rng: &mut ChaCha8Rng,
) -> Scene {
    let [lo, hi] = ROOM_SIDE_RANGE;
    let n_rooms = layout.gen_range(1..=3);
    let mut rooms = Vec::new();
    let mut gaps = Vec::new();
    let mut x = 0.0;
    for i in 0..n_rooms {
        let w = uniform(layout, lo, hi);
        let h = uniform(layout, lo, hi);
        let r = Rect::from_corners(Vec2::new(x, 0.0), Vec2::new(x + w, h));
        if i > 0 {
            let prev: &Rect = &rooms[i - 1];
            let overlap = prev.height().min(h);
            let g0 = uniform(layout, 0.5, overlap - 1.5);
            gaps.push((Vec2::new(x, g0), Vec2::new(x, g0 + 1.0)));
        }
        rooms.push(r);
        x += w;
    }
    let t_room = layout.gen_range(0..n_rooms);
    let room = rooms[t_room];
    let inner = room.inflate(-TABLE_CLEARANCE);
    let short = uniform(layout, 0.7, 1.2);
    let long = uniform(layout, 1.0, 1.8);
    let (tw, th) = if layout.gen_bool(0.5) { (long, short) } else { (short, long) };
    let tw = tw.min(inner.width());
    let th = th.min(inner.height());
    let tx = uniform(layout, inner.min.x, inner.max.x - tw);
    let ty = uniform(layout, inner.min.y, inner.max.y - th);
    let rect = Rect::from_corners(Vec2::new(tx, ty), Vec2::new(tx + tw, ty + th));

    let n_dirt = dirt_rng.gen_range(DIRT_COUNT_RANGE[0]..=DIRT_COUNT_RANGE[1]);
    let margin = 0.02;
    let dirt = (0..n_dirt)
        .map(|_| {
            Vec2::new(
                uniform(dirt_rng, rect.min.x + margin, rect.max.x - margin),
                uniform(dirt_rng, rect.min.y + margin, rect.max.y - margin),
            )
        })
        .collect();

    let walls = room_walls(&rooms, &gaps);
    let mut keep = vec![KeepOut::Rect(rect, CORRIDOR)];
    keep.extend(gaps.iter().map(|(a, b)| KeepOut::Point((*a + *b) * 0.5, 1.2)));
    let obstacles = place_obstacles(obst, &rooms, &keep);
    Scene {
        version: SCENE_FORMAT_VERSION,
        generator_version: GENERATOR_VERSION,
        task: TaskKind::CleanTable,
        seed,
        spawn_room: t_room,
        rooms,
        walls,
        door: None,
        table: Some(TableSpec {
            rect,
            height: TABLE_HEIGHT,
            dirt,
            dirt_count_range: DIRT_COUNT_RANGE,
        }),
        fixtures: Vec::new(),
        obstacles,
    }
}

/// Checks that the door swing is clear of walls and furniture up to its
/// maximum angle.
fn swing_clear(scene: &Scene) -> bool {
    let Some(d) = &scene.door else { return true };
    (1..=20).all(|i| {
        let theta = d.theta_max * i as f64 / 20.0;
        let panel = d.panel_segment(theta);
        let inner = Segment::new(d.hinge + d.panel_direction(theta) * 0.02, panel.b);
        scene.walls.iter().all(|w| !w.intersects(&inner))
            && scene.solid_rects().all(|r| !r.intersects_segment(&inner))
    })
}

/// Builds the scene for `(task, seed)`.
pub fn generate_scene(task: TaskKind, seed: u64) -> Result<Scene> {
    let mut layout = substream(seed, stream::LAYOUT);
    let mut obst = substream(seed, stream::OBSTACLES);
    let mut dirt = substream(seed, stream::DIRT);
    let mut orient_rng = substream(seed, stream::ORIENTATION);
    let orientation = Orientation {
        quarter_turns: orient_rng.gen_range(0..4),
        mirror: orient_rng.gen_bool(0.5),
    };
    let mut last_violation = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let mut scene = match task {
            TaskKind::DoorPush | TaskKind::DoorPull => door_scene(task, seed, &mut layout, &mut obst),
            TaskKind::OpenFridge => fridge_scene(seed, &mut layout, &mut obst),
            TaskKind::CleanTable => table_scene(seed, &mut layout, &mut obst, &mut dirt),
        };
        orientation.apply(&mut scene);
        if let Err(e) = scene.validate() {
            last_violation = e.to_string();
            continue;
        }
        if !swing_clear(&scene) {
            last_violation = "door swing obstructed".into();
            continue;
        }
        let goal = scene.reach_goal(scene.rooms[scene.spawn_room].center());
        if footprint_collides(&Pose2::new(goal.x, goal.y, 0.0), &scene, 0.0) {
            last_violation = "target approach zone blocked".into();
            continue;
        }
        return Ok(scene);
    }
    Err(Error::Generation {
        constraint: last_violation,
        attempts: MAX_ATTEMPTS,
    })
}

/// Samples a collision-free spawn pose at the task's default distance band.
pub fn sample_spawn(scene: &Scene, seed: u64) -> Result<Pose2> {
    sample_spawn_in_band(scene, seed, SpawnBand::for_task(scene.task))
}

/// Samples a spawn pose whose distance to the target reference lies in
/// `band`, inside the spawn room (or any room for tables), collision-free and
/// connected to the target's approach zone.
pub fn sample_spawn_in_band(scene: &Scene, seed: u64, band: SpawnBand) -> Result<Pose2> {
    SpawnBand::new(band.d_min, band.d_max)?;
    let mut rng = substream(seed ^ scene.seed.rotate_left(32), stream::SPAWN);
    let grid = OccupancyGrid::build(scene, 0.0);
    let bounds = scene.bounds();
    let mut violation = "no candidate inside band";
    for _ in 0..MAX_ATTEMPTS {
        let candidate = match (&scene.door, &scene.table) {
            (Some(d), _) => {
                let d_r = uniform(&mut rng, band.d_min, band.d_max);
                let bearing = uniform(&mut rng, -PI, PI);
                d.handle_planar(0.0) + Vec2::from_angle(bearing) * d_r
            }
            (None, Some(t)) => {
                let area = t.rect.inflate(band.d_max);
                Vec2::new(
                    uniform(&mut rng, area.min.x.max(bounds.min.x), area.max.x.min(bounds.max.x)),
                    uniform(&mut rng, area.min.y.max(bounds.min.y), area.max.y.min(bounds.max.y)),
                )
            }
            _ => return Err(Error::Validation("scene has no target".into())),
        };
        let heading = wrap_angle(uniform(&mut rng, -PI, PI));
        let dist = scene.target_distance(candidate, 0.0);
        if !band.contains(dist) {
            violation = "distance outside band";
            continue;
        }
        let room = scene.room_containing(candidate);
        let room_ok = match scene.door {
            Some(_) => room == Some(scene.spawn_room),
            None => room.is_some(),
        };
        if !room_ok {
            violation = "outside spawn room";
            continue;
        }
        let pose = Pose2::new(candidate.x, candidate.y, heading);
        if footprint_collides(&pose, scene, 0.0) {
            violation = "spawn footprint collides";
            continue;
        }
        if grid.path(candidate, scene.reach_goal(candidate)).is_none() {
            violation = "no path to target";
            continue;
        }
        return Ok(pose);
    }
    Err(Error::Generation {
        constraint: format!("spawn sampling: {violation}"),
        attempts: MAX_ATTEMPTS,
    })
}

/// True iff a collision-free grid path connects `from` to `to`, with the door
/// closed.
pub fn shortest_path_exists(scene: &Scene, from: &Pose2, to: Vec2) -> bool {
    OccupancyGrid::build(scene, 0.0).path(from.position(), to).is_some()
}

/// Base-configuration occupancy grid: a cell is free iff the base disc
/// centred on it does not collide.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    free: Vec<bool>,
}

impl OccupancyGrid {
    pub fn build(scene: &Scene, door_theta: f64) -> Self {
        Self::build_with_radius(scene, door_theta, LIMITS.base_radius)
    }

    pub fn build_with_radius(scene: &Scene, door_theta: f64, radius: f64) -> Self {
        let b = scene.bounds();
        let res = GRID_RESOLUTION;
        let cols = (b.width() / res).ceil() as usize + 1;
        let rows = (b.height() / res).ceil() as usize + 1;
        let mut free = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                let p = b.min + Vec2::new(c as f64 * res, r as f64 * res);
                free[r * cols + c] = scene.room_containing(p).is_some() || on_room_gap(scene, p);
                if free[r * cols + c] {
                    free[r * cols + c] = !disc_collides(p, radius, scene, door_theta);
                }
            }
        }
        Self {
            origin: b.min,
            resolution: res,
            cols,
            rows,
            free,
        }
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).round();
        let r = ((p.y - self.origin.y) / self.resolution).round();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then(|| (c as usize, r as usize))
    }

    pub fn center(&self, cell: (usize, usize)) -> Vec2 {
        self.origin + Vec2::new(cell.0 as f64 * self.resolution, cell.1 as f64 * self.resolution)
    }

    pub fn is_free(&self, cell: (usize, usize)) -> bool {
        self.free[cell.1 * self.cols + cell.0]
    }

    /// Breadth-first search over 8-connected free cells. Returns cell centres
    /// from start to goal. Identical start and goal cells always succeed.
    pub fn path(&self, from: Vec2, to: Vec2) -> Option<Vec<Vec2>> {
        let start = self.cell_of(from)?;
        let goal = self.cell_of(to)?;
        if start == goal {
            return Some(vec![self.center(start)]);
        }
        if !self.is_free(start) || !self.is_free(goal) {
            return None;
        }
        let idx = |c: (usize, usize)| c.1 * self.cols + c.0;
        let mut parent = vec![usize::MAX; self.cols * self.rows];
        parent[idx(start)] = idx(start);
        let mut queue = VecDeque::from([start]);
        const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        while let Some(cur) = queue.pop_front() {
            if cur == goal {
                let mut out = vec![self.center(cur)];
                let mut i = idx(cur);
                while parent[i] != i {
                    i = parent[i];
                    out.push(self.center((i % self.cols, i / self.cols)));
                }
                out.reverse();
                return Some(out);
            }
            for (dx, dy) in STEPS {
                let nx = cur.0 as i64 + dx;
                let ny = cur.1 as i64 + dy;
                if nx < 0 || ny < 0 || nx >= self.cols as i64 || ny >= self.rows as i64 {
                    continue;
                }
                let next = (nx as usize, ny as usize);
                if !self.is_free(next) || parent[idx(next)] != usize::MAX {
                    continue;
                }
                if dx != 0 && dy != 0
                    && (!self.is_free((nx as usize, cur.1)) || !self.is_free((cur.0, ny as usize)))
                {
                    continue;
                }
                parent[idx(next)] = idx(cur);
                queue.push_back(next);
            }
        }
        None
    }
}

/// Points on a shared wall line inside a doorway are free space too.
fn on_room_gap(scene: &Scene, p: Vec2) -> bool {
    let on_boundary = scene.rooms.iter().any(|r| r.contains(p));
    on_boundary && !scene.walls.iter().any(|w| w.distance_to_point(p) < 1e-9)
}

/// Serialises a scene as a versioned, human-readable TOML record.
pub fn scene_to_text(scene: &Scene) -> Result<String> {
    toml::to_string(scene).map_err(|e| Error::Parse(e.to_string()))
}

pub fn scene_from_text(text: &str) -> Result<Scene> {
    let scene: Scene = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if scene.version != SCENE_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported scene format version {}",
            scene.version
        )));
    }
    Ok(scene)
}

#[cfg(test)]
impl Scene {
    pub(crate) fn empty_for_tests() -> Scene {
        Scene {
            version: SCENE_FORMAT_VERSION,
            generator_version: GENERATOR_VERSION,
            task: TaskKind::CleanTable,
            seed: 0,
            spawn_room: 0,
            rooms: vec![Rect::from_corners(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0))],
            walls: Vec::new(),
            door: None,
            table: None,
            fixtures: Vec::new(),
            obstacles: Vec::new(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [TaskKind; 4] = [
        TaskKind::DoorPush,
        TaskKind::DoorPull,
        TaskKind::OpenFridge,
        TaskKind::CleanTable,
    ];

    #[test]
    fn deterministic_generation() {
        let a = generate_scene(TaskKind::DoorPush, 7).unwrap();
        let b = generate_scene(TaskKind::DoorPush, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(scene_to_text(&a).unwrap(), scene_to_text(&b).unwrap());
    }

    #[test]
    fn door_scenes_have_two_rooms_one_door() {
        for seed in 0..50 {
            for task in [TaskKind::DoorPush, TaskKind::DoorPull] {
                let s = generate_scene(task, seed).unwrap();
                assert_eq!(s.rooms.len(), 2);
                assert!(s.door.is_some());
                assert!(s.table.is_none());
            }
        }
    }

    #[test]
    fn table_dirt_inside_and_counted() {
        for seed in 0..50 {
            let s = generate_scene(TaskKind::CleanTable, seed).unwrap();
            let t = s.table.as_ref().unwrap();
            assert!((20..=60).contains(&t.dirt.len()));
            assert!(t.dirt.iter().all(|p| t.rect.strictly_contains(*p)));
            assert!((1..=3).contains(&s.rooms.len()));
        }
    }

    #[test]
    fn obstacle_count_bounded() {
        for task in ALL {
            for seed in 0..30 {
                let s = generate_scene(task, seed).unwrap();
                assert!(s.obstacles.len() <= 3);
            }
        }
    }

    #[test]
    fn fridge_frontal_clearance() {
        for seed in 0..30 {
            let s = generate_scene(TaskKind::OpenFridge, seed).unwrap();
            let body = s.fixtures[0];
            let counter = s.fixtures[1];
            let gap = body.distance_to_rect(&counter);
            assert!((0.8 - 1e-9..=1.5 + 1e-9).contains(&gap), "gap {gap}");
        }
    }

    #[test]
    fn spawn_bands_respected() {
        for task in ALL {
            let band = SpawnBand::for_task(task);
            for seed in 0..20 {
                let s = generate_scene(task, seed).unwrap();
                let p = sample_spawn(&s, seed * 31 + 1).unwrap();
                let d = s.target_distance(p.position(), 0.0);
                assert!(band.contains(d), "{task} seed {seed}: {d}");
                assert!(!footprint_collides(&p, &s, 0.0));
                assert_eq!(p, sample_spawn(&s, seed * 31 + 1).unwrap());
            }
        }
    }

    #[test]
    fn path_trivial_and_enclosed() {
        let s = generate_scene(TaskKind::CleanTable, 3).unwrap();
        let p = sample_spawn(&s, 0).unwrap();
        assert!(shortest_path_exists(&s, &p, p.position()));

        let mut boxed = Scene::empty_for_tests();
        boxed.rooms = vec![Rect::from_corners(Vec2::ZERO, Vec2::new(6.0, 6.0))];
        boxed.walls = boxed.rooms[0].edges().to_vec();
        let inner = Rect::from_corners(Vec2::new(3.0, 3.0), Vec2::new(5.0, 5.0));
        boxed.walls.extend(inner.edges());
        let start = Pose2::new(1.0, 1.0, 0.0);
        assert!(!shortest_path_exists(&boxed, &start, Vec2::new(4.0, 4.0)));
        assert!(shortest_path_exists(&boxed, &start, Vec2::new(2.0, 5.0)));
    }

    #[test]
    fn closed_pull_door_handle_front_reachable() {
        // Fixture: two 4 m rooms, the robot in the room the door swings into.
        let mut s = Scene::empty_for_tests();
        s.task = TaskKind::DoorPull;
        let a = Rect::from_corners(Vec2::ZERO, Vec2::new(4.0, 4.0));
        let b = Rect::from_corners(Vec2::new(4.0, 0.0), Vec2::new(8.0, 4.0));
        s.rooms = vec![a, b];
        let gap = (Vec2::new(4.0, 1.5), Vec2::new(4.0, 2.4));
        s.walls = room_walls(&s.rooms, &[gap]);
        s.door = Some(DoorSpec {
            hinge: gap.0,
            panel_width: DOOR_WIDTH,
            closed_direction: Vec2::new(0.0, 1.0),
            swing_sign: 1.0,
            theta_max: THETA_MAX,
            handle_fraction: HANDLE_FRACTION,
            handle_height: HANDLE_HEIGHT,
            kind: DoorKind::Door,
            mode: DoorMode::Pull,
        });
        s.validate().unwrap();
        let start = Pose2::new(1.0, 1.0, 0.0);
        let front = s.reach_goal(start.position());
        assert!(front.x < 4.0);
        assert!(shortest_path_exists(&s, &start, front));
        // The other room is sealed off while the door is closed.
        assert!(!shortest_path_exists(&s, &start, Vec2::new(6.0, 2.0)));
    }

    #[test]
    fn spawn_distances_fill_both_half_bands() {
        for task in [TaskKind::DoorPush, TaskKind::CleanTable] {
            let band = SpawnBand::for_task(task);
            let (mut low, mut high) = (0, 0);
            for seed in 0..200 {
                let s = generate_scene(task, seed).unwrap();
                let p = sample_spawn(&s, seed).unwrap();
                let d = s.target_distance(p.position(), 0.0);
                if d < band.midpoint() { low += 1 } else { high += 1 }
            }
            assert!(low > 0 && high > 0, "{task}: {low}/{high}");
        }
    }

    #[test]
    fn text_roundtrip_and_version_check() {
        let s = generate_scene(TaskKind::OpenFridge, 11).unwrap();
        let text = scene_to_text(&s).unwrap();
        assert_eq!(scene_from_text(&text).unwrap(), s);
        let bumped = text.replacen("version = 1", "version = 9", 1);
        assert!(scene_from_text(&bumped).is_err());
    }

    #[test]
    fn band_validation() {
        assert!(SpawnBand::new(2.0, 1.0).is_err());
        assert!(SpawnBand::new(0.0, 1.0).is_err());
        assert!(SpawnBand::new(1.0, 5.0).unwrap().check_generable().is_err());
        assert!(SpawnBand::new(1.0, 2.0).unwrap().check_generable().is_ok());
    }
}
