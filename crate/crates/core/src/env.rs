//! Episode lifecycle, observations, metrics and the lockstep vectorized
//! runner.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, Vec2};
use crate::interaction::{
    open_fraction, resolve_pull, resolve_push, sweep_dirt, try_grasp, DirtField, DoorState,
    GraspState,
};
use crate::kinematics::{apply_action, clamp_action, gripper_tip, ActionCommand, RobotState, RAW_ACTION_DIM};
use crate::reward::{total_reward, RewardBreakdown, RewardState, RewardWeights, StepMeasurements};
use crate::scene::{generate_scene, sample_spawn_in_band, DoorMode, Scene, SpawnBand, GENERATOR_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

pub const MAX_EPISODE_STEPS: usize = 500;
pub const OBS_DIM: usize = 19;
pub const RAY_COUNT: usize = 8;
pub const RAY_RANGE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DoorPush,
    DoorPull,
    OpenFridge,
    CleanTable,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::DoorPush,
        TaskKind::DoorPull,
        TaskKind::OpenFridge,
        TaskKind::CleanTable,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::DoorPush => "door_push",
            TaskKind::DoorPull => "door_pull",
            TaskKind::OpenFridge => "open_fridge",
            TaskKind::CleanTable => "clean_table",
        }
    }

    /// Door and fridge tasks expose the grasp dimension.
    pub fn has_grasp(&self) -> bool {
        *self != TaskKind::CleanTable
    }

    /// Pull-style tasks reward the first successful grasp.
    pub fn rewards_grasp(&self) -> bool {
        matches!(self, TaskKind::DoorPull | TaskKind::OpenFridge)
    }

    pub fn success_threshold(&self) -> f64 {
        match self {
            TaskKind::DoorPush | TaskKind::DoorPull => 0.90,
            TaskKind::OpenFridge => 0.70,
            TaskKind::CleanTable => 0.75,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s || t.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

/// Strictly greater than the task's threshold.
pub fn is_success(task: TaskKind, progress: f64) -> bool {
    progress > task.success_threshold()
}

/// Fixed-layout observation vector.
///
/// | index | content |
/// |-------|---------|
/// | 0..5  | lift, extension, sin wrist, cos wrist, holding |
/// | 5..8  | target minus gripper tip in the robot frame (x, y), reference height minus lift |
/// | 8     | base-to-target distance |
/// | 9     | bearing of the target from the base heading |
/// | 10    | task progress |
/// | 11..19 | range to the nearest obstacle along 8 rays at 45° spacing, capped at 3 m |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn proprio(&self) -> &[f64] {
        &self.0[0..5]
    }

    pub fn target_rel(&self) -> &[f64] {
        &self.0[5..8]
    }

    pub fn base_dist(&self) -> f64 {
        self.0[8]
    }

    pub fn heading_err(&self) -> f64 {
        self.0[9]
    }

    pub fn progress(&self) -> f64 {
        self.0[10]
    }

    pub fn rays(&self) -> &[f64] {
        &self.0[11..19]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub progress: f64,
    pub valid: bool,
    pub door_theta: Option<f64>,
    pub dirt_remaining: Option<usize>,
    pub holding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// First line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub task: TaskKind,
    pub scene_seed: u64,
    pub spawn_seed: u64,
    pub band: SpawnBand,
    pub generator_version: u32,
}

/// One line per step. Field order is part of the log format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: [f64; RAW_ACTION_DIM],
    pub reward: RewardBreakdown,
    pub progress: f64,
    pub valid: bool,
    pub door_theta: Option<f64>,
    pub dirt_remaining: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub task: TaskKind,
    pub scene_seed: u64,
    pub spawn_seed: u64,
    pub success: bool,
    pub progress: f64,
    pub episode_length: usize,
    pub progress_speed: f64,
    pub return_total: f64,
}

/// Line-delimited episode log: a header, one record per step, a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(EpisodeHeader),
    Step(StepRecord),
    Summary(EpisodeSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &LogRecord| {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        };
        push(&LogRecord::Header(self.header.clone()));
        for s in &self.steps {
            push(&LogRecord::Step(s.clone()));
        }
        push(&LogRecord::Summary(summarize(self)));
        out
    }

    /// Parses a log; an empty input yields `None`.
    pub fn from_jsonl(text: &str) -> Result<Option<EpisodeLog>> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            match rec {
                LogRecord::Header(h) => {
                    if header.is_some() {
                        return Err(Error::Parse(format!("line {}: duplicate header", i + 1)));
                    }
                    header = Some(h);
                }
                LogRecord::Step(s) => {
                    if header.is_none() {
                        return Err(Error::Parse(format!("line {}: step before header", i + 1)));
                    }
                    if s.step != steps.len() {
                        return Err(Error::Parse(format!("line {}: step index {} out of order", i + 1, s.step)));
                    }
                    steps.push(s);
                }
                LogRecord::Summary(_) => {}
            }
        }
        Ok(header.map(|header| EpisodeLog { header, steps }))
    }
}

/// Per-episode metrics. Failed episodes count as running to the cap.
pub fn summarize(log: &EpisodeLog) -> EpisodeSummary {
    let progress = log.steps.last().map_or(0.0, |s| s.progress);
    let success = is_success(log.header.task, progress);
    let episode_length = log.steps.len();
    EpisodeSummary {
        task: log.header.task,
        scene_seed: log.header.scene_seed,
        spawn_seed: log.header.spawn_seed,
        success,
        progress,
        episode_length,
        progress_speed: progress_speed(progress, episode_length),
        return_total: log.steps.iter().map(|s| s.reward.total).sum(),
    }
}

/// `progress / (length / max_length)`; zero for empty episodes.
pub fn progress_speed(progress: f64, episode_length: usize) -> f64 {
    if episode_length == 0 {
        return 0.0;
    }
    progress / (episode_length as f64 / MAX_EPISODE_STEPS as f64)
}

/// One simulated episode.
#[derive(Debug, Clone)]
pub struct Env {
    pub task: TaskKind,
    pub scene: Scene,
    pub robot: RobotState,
    pub door: Option<DoorState>,
    pub dirt: Option<DirtField>,
    pub reward_state: RewardState,
    pub weights: RewardWeights,
    pub steps: usize,
    /// Truncation limit; never above [`MAX_EPISODE_STEPS`].
    pub max_steps: usize,
    pub done: bool,
    header: EpisodeHeader,
    records: Vec<StepRecord>,
}

impl Env {
    /// Fresh episode for `(task, scene_seed, spawn_seed)` at the task's
    /// default spawn band.
    pub fn reset(task: TaskKind, scene_seed: u64, spawn_seed: u64) -> Result<(Env, Observation)> {
        Self::reset_in_band(task, scene_seed, spawn_seed, SpawnBand::for_task(task))
    }

    pub fn reset_in_band(
        task: TaskKind,
        scene_seed: u64,
        spawn_seed: u64,
        band: SpawnBand,
    ) -> Result<(Env, Observation)> {
        let scene = generate_scene(task, scene_seed)?;
        let spawn = sample_spawn_in_band(&scene, spawn_seed, band)?;
        let header = EpisodeHeader {
            task,
            scene_seed,
            spawn_seed,
            band,
            generator_version: GENERATOR_VERSION,
        };
        let env = Env::from_scene(scene, spawn, header);
        let obs = env.observation();
        Ok((env, obs))
    }

    /// Builds an episode on an explicit scene and spawn pose (fixtures).
    pub fn from_scene(scene: Scene, spawn: Pose2, header: EpisodeHeader) -> Env {
        let task = scene.task;
        let robot = RobotState::new(spawn);
        let door = scene.door.map(DoorState::closed);
        let dirt = scene.table.as_ref().map(|t| DirtField::new(&t.dirt));
        let weights = RewardWeights::for_task(task);
        let mut env = Env {
            task,
            scene,
            robot,
            door,
            dirt,
            reward_state: RewardState::new(0.0, 0.0),
            weights,
            steps: 0,
            max_steps: MAX_EPISODE_STEPS,
            done: false,
            header,
            records: Vec::new(),
        };
        env.reward_state = RewardState::new(env.base_distance(), env.ee_distance());
        env
    }

    pub fn header(&self) -> &EpisodeHeader {
        &self.header
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn log(&self) -> EpisodeLog {
        EpisodeLog {
            header: self.header.clone(),
            steps: self.records.clone(),
        }
    }

    pub fn door_theta(&self) -> f64 {
        self.door.map_or(0.0, |d| d.theta)
    }

    pub fn progress(&self) -> f64 {
        match (&self.door, &self.dirt) {
            (Some(d), _) => open_fraction(d),
            (None, Some(dirt)) => dirt.cleaned_fraction(),
            _ => 0.0,
        }
    }

    /// Planar reference the manipulation terms aim at, with its height:
    /// the handle for doors and fridges, the table centre for tables.
    pub fn manip_reference(&self) -> (Vec2, f64) {
        match (&self.door, &self.scene.table) {
            (Some(d), _) => (d.spec.handle_planar(d.theta), d.spec.handle_height),
            (None, Some(t)) => (t.rect.center(), t.height),
            _ => (self.robot.base.position(), self.robot.lift),
        }
    }

    pub fn base_distance(&self) -> f64 {
        self.scene
            .target_distance(self.robot.base.position(), self.door_theta())
    }

    pub fn ee_distance(&self) -> f64 {
        let (p, h) = self.manip_reference();
        let tip = gripper_tip(&self.robot);
        let planar = Vec2::new(tip[0], tip[1]).distance(p);
        planar.hypot(h - tip[2])
    }

    pub fn observation(&self) -> Observation {
        let r = &self.robot;
        let mut o = [0.0; OBS_DIM];
        o[0] = r.lift;
        o[1] = r.extension;
        o[2] = r.wrist.sin();
        o[3] = r.wrist.cos();
        o[4] = if r.holding { 1.0 } else { 0.0 };
        let (reference, height) = self.manip_reference();
        let tip = gripper_tip(&self.robot);
        let rel = (reference - Vec2::new(tip[0], tip[1])).rotate(-r.base.theta);
        o[5] = rel.x;
        o[6] = rel.y;
        o[7] = height - r.lift;
        let base = r.base.position();
        let nav_ref = self.scene.target_reference(base, self.door_theta());
        o[8] = nav_ref.distance(base);
        o[9] = if o[8] > 0.0 {
            wrap_angle((nav_ref - base).angle() - r.base.theta)
        } else {
            0.0
        };
        o[10] = self.progress();
        for (k, slot) in o[11..].iter_mut().enumerate() {
            let dir = Vec2::from_angle(r.base.theta + k as f64 * FRAC_PI_4);
            *slot = self.ray_range(base, dir);
        }
        Observation(o)
    }

    fn ray_range(&self, origin: Vec2, dir: Vec2) -> f64 {
        let theta = self.door_theta();
        let walls = self.scene.walls.iter().filter_map(|w| w.ray_hit(origin, dir));
        let panel = self
            .scene
            .door
            .iter()
            .filter_map(|d| d.panel_segment(theta).ray_hit(origin, dir));
        let rects = self.scene.solid_rects().filter_map(|r| r.ray_hit(origin, dir));
        walls
            .chain(panel)
            .chain(rects)
            .fold(RAY_RANGE, f64::min)
            .clamp(0.0, RAY_RANGE)
    }

    /// Advances one step: scale the action, move the robot, grasp, resolve
    /// the articulation or the sponge, score, and check termination.
    pub fn step(&mut self, raw: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage(
                "episode already finished; reset before stepping".into(),
            ));
        }
        let cmd = clamp_action(raw, self.task.has_grasp())?;
        let before = self.robot;
        let tip_before = gripper_tip(&before);
        let out = advance_physics(&self.scene, &before, self.door, &cmd);
        let (after, valid, grasped_now) = (out.robot, out.valid, out.grasped_now);
        self.door = out.door;
        if let (Some(dirt), Some(table)) = (&self.dirt, &self.scene.table) {
            let (next, _) = sweep_dirt(&after, table, dirt);
            self.dirt = Some(next);
        }
        self.robot = after;

        let progress = self.progress();
        let tip_after = gripper_tip(&after);
        let ee_moved = ((tip_after[0] - tip_before[0]).powi(2)
            + (tip_after[1] - tip_before[1]).powi(2)
            + (tip_after[2] - tip_before[2]).powi(2))
        .sqrt();
        let success = is_success(self.task, progress);
        let m = StepMeasurements {
            d_base: self.base_distance(),
            d_ee: self.ee_distance(),
            progress,
            ee_moved,
            action_valid: valid,
            grasped_now: grasped_now && self.task.rewards_grasp(),
            finished_now: success,
        };
        let reward = total_reward(&mut self.reward_state, &self.weights, &m)?;

        let step = self.steps;
        self.steps += 1;
        let terminated = success;
        let truncated = !terminated && self.steps >= self.max_steps;
        self.done = terminated || truncated;

        let mut action = [0.0; RAW_ACTION_DIM];
        action.copy_from_slice(raw);
        let info = StepInfo {
            progress,
            valid,
            door_theta: self.door.map(|d| d.theta),
            dirt_remaining: self.dirt.as_ref().map(|d| d.remaining.len()),
            holding: after.holding,
        };
        self.records.push(StepRecord {
            step,
            action,
            reward,
            progress,
            valid,
            door_theta: info.door_theta,
            dirt_remaining: info.dirt_remaining,
        });
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated,
            info,
        })
    }

    pub fn summary(&self) -> EpisodeSummary {
        summarize(&self.log())
    }
}

/// Robot and articulation state after one command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsOutcome {
    pub robot: RobotState,
    pub door: Option<DoorState>,
    pub valid: bool,
    pub grasped_now: bool,
}

/// Moves the robot, attempts a grasp when commanded, then resolves the door.
/// Dirt is handled separately since it does not feed back into motion.
pub fn advance_physics(
    scene: &Scene,
    before: &RobotState,
    door: Option<DoorState>,
    cmd: &ActionCommand,
) -> PhysicsOutcome {
    let theta = door.map_or(0.0, |d| d.theta);
    let (mut after, valid) = apply_action(before, cmd, scene, theta);
    let mut grasped_now = false;
    let door = door.map(|door| {
        if cmd.grasp_triggered() && !after.holding {
            let g = try_grasp(&after, &door);
            grasped_now = g.holding;
            after.holding = g.holding;
        }
        match door.spec.mode {
            DoorMode::Push => resolve_push(before, &after, &door),
            DoorMode::Pull => {
                let (d, g) = resolve_pull(&after, &door, &GraspState { holding: after.holding });
                after.holding = g.holding;
                d
            }
        }
    });
    PhysicsOutcome { robot: after, door, valid, grasped_now }
}

/// Where vectorized environments draw their next episode seeds from.
#[derive(Debug, Clone)]
pub enum SeedSource {
    /// A fixed list, consumed in order; environments go idle once empty.
    List(VecDeque<(u64, u64)>),
    /// Endless stream. Scene seeds cycle through `scene_pool` when given,
    /// otherwise they are derived from the episode index.
    Stream {
        base: u64,
        next: u64,
        scene_pool: Option<Vec<u64>>,
    },
}

impl SeedSource {
    pub fn list(seeds: impl IntoIterator<Item = (u64, u64)>) -> Self {
        SeedSource::List(seeds.into_iter().collect())
    }

    pub fn stream(base: u64) -> Self {
        SeedSource::Stream { base, next: 0, scene_pool: None }
    }

    pub fn stream_over_scenes(base: u64, scene_pool: Vec<u64>) -> Self {
        SeedSource::Stream { base, next: 0, scene_pool: Some(scene_pool) }
    }

    pub fn next_seeds(&mut self) -> Option<(u64, u64)> {
        match self {
            SeedSource::List(q) => q.pop_front(),
            SeedSource::Stream { base, next, scene_pool } => {
                let i = *next;
                *next += 1;
                let spawn = splitmix64(base.wrapping_add(splitmix64(i ^ 0x5eed)));
                let scene = match scene_pool {
                    Some(pool) if !pool.is_empty() => pool[(i % pool.len() as u64) as usize],
                    _ => splitmix64(base.wrapping_mul(31).wrapping_add(i)),
                };
                Some((scene, spawn))
            }
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A policy acting on every environment of a [`VecEnv`] at once.
pub trait BatchPolicy {
    /// `starts[i]` is true on the first step of environment `i`'s episode.
    /// Idle environments (`envs[i]` is `None`) get an ignored action.
    fn act(
        &mut self,
        envs: &[Option<Env>],
        obs: &[Observation],
        starts: &[bool],
    ) -> Result<Vec<[f64; RAW_ACTION_DIM]>>;
}

/// Next episode from `seeds`. Streams skip seeds whose scene or spawn cannot
/// be generated; lists report the failure.
fn draw_episode(seeds: &mut SeedSource, task: TaskKind, band: SpawnBand) -> Result<Option<(Env, Observation)>> {
    const STREAM_RETRIES: usize = 64;
    let retries = if matches!(seeds, SeedSource::Stream { .. }) { STREAM_RETRIES } else { 1 };
    let mut last = None;
    for _ in 0..retries {
        let Some((scene, spawn)) = seeds.next_seeds() else { return Ok(None) };
        match Env::reset_in_band(task, scene, spawn, band) {
            Ok(pair) => return Ok(Some(pair)),
            Err(e @ Error::Generation { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Lockstep vector of environments with automatic resets.
pub struct VecEnv {
    pub task: TaskKind,
    pub band: SpawnBand,
    pub envs: Vec<Option<Env>>,
    pub obs: Vec<Observation>,
    pub starts: Vec<bool>,
    seeds: SeedSource,
    pub parallel: bool,
    max_steps: usize,
}

/// Per-env outcome of one lockstep step.
#[derive(Debug, Clone)]
pub struct VecStep {
    pub result: Option<StepResult>,
    /// Completed episode log when the step ended an episode.
    pub finished: Option<EpisodeLog>,
}

impl VecEnv {
    pub fn new(task: TaskKind, n: usize, seeds: SeedSource) -> Result<Self> {
        Self::with_band(task, n, seeds, SpawnBand::for_task(task))
    }

    pub fn with_band(task: TaskKind, n: usize, mut seeds: SeedSource, band: SpawnBand) -> Result<Self> {
        let mut envs = Vec::with_capacity(n);
        let mut obs = Vec::with_capacity(n);
        for i in 0..n {
            match draw_episode(&mut seeds, task, band).map_err(|e| e.in_env(i))? {
                Some((env, o)) => {
                    envs.push(Some(env));
                    obs.push(o);
                }
                None => {
                    envs.push(None);
                    obs.push(Observation([0.0; OBS_DIM]));
                }
            }
        }
        Ok(Self {
            task,
            band,
            starts: vec![true; n],
            envs,
            obs,
            seeds,
            parallel: true,
            max_steps: MAX_EPISODE_STEPS,
        })
    }

    /// Applies a shorter episode cap to current and future episodes.
    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps.min(MAX_EPISODE_STEPS);
        for env in self.envs.iter_mut().flatten() {
            env.max_steps = self.max_steps;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn active(&self) -> usize {
        self.envs.iter().filter(|e| e.is_some()).count()
    }

    /// Steps every active environment; finished ones are replaced by fresh
    /// episodes drawn from the seed source in environment-index order.
    pub fn step(&mut self, actions: &[[f64; RAW_ACTION_DIM]]) -> Result<Vec<VecStep>> {
        if actions.len() != self.envs.len() {
            return Err(Error::Shape(format!(
                "{} actions for {} environments",
                actions.len(),
                self.envs.len()
            )));
        }
        let step_one = |(env, a): (&mut Option<Env>, &[f64; RAW_ACTION_DIM])| -> Result<Option<StepResult>> {
            match env {
                Some(e) => e.step(a).map(Some),
                None => Ok(None),
            }
        };
        let results: Vec<Result<Option<StepResult>>> = if self.parallel {
            self.envs.par_iter_mut().zip(actions.par_iter()).map(step_one).collect()
        } else {
            self.envs.iter_mut().zip(actions.iter()).map(step_one).collect()
        };
        let mut out = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            let result = r.map_err(|e| e.in_env(i))?;
            let mut finished = None;
            self.starts[i] = false;
            if let Some(res) = &result {
                self.obs[i] = res.observation;
                if res.terminated || res.truncated {
                    let env = self.envs[i].take().expect("stepped env exists");
                    finished = Some(env.log());
                    if let Some((mut env, o)) =
                        draw_episode(&mut self.seeds, self.task, self.band).map_err(|e| e.in_env(i))?
                    {
                        env.max_steps = self.max_steps;
                        self.envs[i] = Some(env);
                        self.obs[i] = o;
                        self.starts[i] = true;
                    }
                }
            }
            out.push(VecStep { result, finished });
        }
        Ok(out)
    }
}

/// Output of [`run_vectorized`].
#[derive(Debug, Clone, Default)]
pub struct Rollouts {
    /// `[step][env]` transitions; `None` for idle environments.
    pub transitions: Vec<Vec<Option<StepResult>>>,
    pub episodes: Vec<EpisodeLog>,
    pub samples: usize,
}

/// Advances all environments in lockstep for `steps` steps, or until every
/// environment is idle when `steps` is `None`.
pub fn run_vectorized(
    venv: &mut VecEnv,
    policy: &mut dyn BatchPolicy,
    steps: Option<usize>,
) -> Result<Rollouts> {
    let mut out = Rollouts::default();
    let mut t = 0;
    while steps.map_or(venv.active() > 0, |n| t < n) {
        let actions = policy.act(&venv.envs, &venv.obs, &venv.starts)?;
        let stepped = venv.step(&actions)?;
        let mut row = Vec::with_capacity(stepped.len());
        for s in stepped {
            if s.result.is_some() {
                out.samples += 1;
            }
            if let Some(log) = s.finished {
                out.episodes.push(log);
            }
            row.push(s.result);
        }
        out.transitions.push(row);
        t += 1;
    }
    Ok(out)
}
