//! Benchmark commands: scene generation, evaluation tables, distance sweeps,
//! replicate training, replay rendering, and the environment server.

pub mod replay;
pub mod server;

use crate::agents::checkpoint::Checkpoint;
use crate::agents::{ControllerKind, Gating, LearnedController, PerEnv, ScriptedPlanner};
use crate::env::{
    run_vectorized, splitmix64, summarize, BatchPolicy, Env, EpisodeLog, EpisodeSummary, SeedSource, TaskKind,
    VecEnv, MAX_EPISODE_STEPS,
};
use crate::error::{Error, Result};
use crate::ppo::{train, CurveRecord, TrainConfig, HELD_OUT_SCENE_BASE};
use crate::scene::{generate_scene, scene_to_text, SpawnBand};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Episode count of the `--quick` evaluation mode.
pub const QUICK_EPISODES: usize = 50;

/// Which `(scene, spawn)` pairs to run. An explicit `list` wins over
/// `start`/`count`; generated pairs use `spawn = splitmix64(scene)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSpec {
    pub list: Vec<[u64; 2]>,
    pub start: u64,
    pub count: usize,
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self {
            list: Vec::new(),
            start: HELD_OUT_SCENE_BASE,
            count: 300,
        }
    }
}

impl SeedSpec {
    pub fn pairs(&self) -> Vec<(u64, u64)> {
        if self.list.is_empty() {
            (self.start..self.start + self.count as u64).map(|s| (s, splitmix64(s))).collect()
        } else {
            self.list.iter().map(|[a, b]| (*a, *b)).collect()
        }
    }

    /// Keeps only the first `n` pairs.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.count = out.count.min(n);
        out.list.truncate(n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `[d_min, d_max]` spawn bands in metres.
    pub bands: Vec<[f64; 2]>,
    /// The factored controller compared against `controller`.
    pub factored: ControllerKind,
    #[serde(default)]
    pub factored_checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub task: TaskKind,
    pub controller: ControllerKind,
    /// One checkpoint per replicate; required for learned controllers.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default = "default_cap")]
    pub episode_cap: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallel")]
    pub parallel_envs: usize,
    /// Write one full step log per episode under `logs/`.
    #[serde(default = "default_true")]
    pub write_logs: bool,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_cap() -> usize {
    MAX_EPISODE_STEPS
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_parallel() -> usize {
    20
}

fn default_true() -> bool {
    true
}

impl BenchmarkConfig {
    pub fn new(task: TaskKind, controller: ControllerKind) -> Self {
        Self {
            task,
            controller,
            checkpoints: Vec::new(),
            seeds: SeedSpec::default(),
            episode_cap: MAX_EPISODE_STEPS,
            output_dir: default_output(),
            parallel_envs: default_parallel(),
            write_logs: true,
            sweep: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.pairs().is_empty() {
            return Err(Error::Config("seed specification is empty".into()));
        }
        if self.episode_cap == 0 || self.episode_cap > MAX_EPISODE_STEPS {
            return Err(Error::Config(format!(
                "episode_cap must be in 1..={MAX_EPISODE_STEPS}, got {}",
                self.episode_cap
            )));
        }
        if self.parallel_envs == 0 {
            return Err(Error::Config("parallel_envs must be positive".into()));
        }
        check_checkpoints(self.controller, &self.checkpoints)?;
        if let Some(sweep) = &self.sweep {
            if sweep.bands.is_empty() {
                return Err(Error::Config("sweep needs at least one band".into()));
            }
            for [lo, hi] in &sweep.bands {
                SpawnBand::new(*lo, *hi)
                    .and_then(|b| b.check_generable())
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            check_checkpoints(sweep.factored, &sweep.factored_checkpoints)?;
        }
        Ok(())
    }
}

fn check_checkpoints(kind: ControllerKind, paths: &[PathBuf]) -> Result<()> {
    match (kind.is_learned(), paths.is_empty()) {
        (true, true) => Err(Error::Config(format!("controller {kind} needs at least one checkpoint"))),
        (false, false) => Err(Error::Config(format!("controller {kind} takes no checkpoint"))),
        _ => Ok(()),
    }
}

/// Batch policy for a controller kind; learned kinds need a checkpoint.
pub fn make_policy(kind: ControllerKind, checkpoint: Option<&Checkpoint>) -> Result<Box<dyn BatchPolicy>> {
    match kind {
        ControllerKind::ScriptedOracle => Ok(Box::new(PerEnv::new(ScriptedPlanner::oracle))),
        ControllerKind::ScriptedTwoStage => Ok(Box::new(PerEnv::new(ScriptedPlanner::two_stage))),
        _ => {
            let ck = checkpoint.ok_or_else(|| Error::Config(format!("controller {kind} needs a checkpoint")))?;
            if ck.controller != kind {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a {} policy, not {kind}",
                    ck.controller
                )));
            }
            let network = ck.network()?;
            Ok(Box::new(LearnedController::new(network, ck.params.clone(), Gating::for_kind(kind))))
        }
    }
}

/// Runs one episode per seed pair and returns the logs in seed order.
pub fn run_episodes(
    task: TaskKind,
    band: SpawnBand,
    seeds: &[(u64, u64)],
    policy: &mut dyn BatchPolicy,
    parallel_envs: usize,
    episode_cap: usize,
) -> Result<Vec<EpisodeLog>> {
    if seeds.is_empty() {
        return Ok(Vec::new());
    }
    let n = parallel_envs.clamp(1, seeds.len());
    let mut venv =
        VecEnv::with_band(task, n, SeedSource::list(seeds.iter().copied()), band)?.with_max_steps(episode_cap);
    let mut logs = run_vectorized(&mut venv, policy, None)?.episodes;
    logs.sort_by_key(|l| seeds.iter().position(|p| *p == (l.header.scene_seed, l.header.spawn_seed)));
    Ok(logs)
}

/// One line of `episodes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub replicate: usize,
    pub summary: EpisodeSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MetricStat {
    if xs.is_empty() {
        return MetricStat { mean: 0.0, std: 0.0 };
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MetricStat { mean, std: var.sqrt() }
}

/// Mean ± std of the four benchmark metrics. With several replicates the
/// spread is across replicate means; with one it is across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: TaskKind,
    pub controller: ControllerKind,
    pub replicates: usize,
    pub episodes: usize,
    pub success_rate: MetricStat,
    pub progress: MetricStat,
    pub progress_speed: MetricStat,
    pub episode_length: MetricStat,
}

pub fn aggregate(task: TaskKind, controller: ControllerKind, episodes: &[EvalEpisode]) -> AggregateRow {
    let mut reps: Vec<usize> = episodes.iter().map(|e| e.replicate).collect();
    reps.sort_unstable();
    reps.dedup();
    let metric = |f: &dyn Fn(&EpisodeSummary) -> f64| -> MetricStat {
        if reps.len() > 1 {
            let means: Vec<f64> = reps
                .iter()
                .map(|r| {
                    let xs: Vec<f64> = episodes.iter().filter(|e| e.replicate == *r).map(|e| f(&e.summary)).collect();
                    mean_std(&xs).mean
                })
                .collect();
            mean_std(&means)
        } else {
            let xs: Vec<f64> = episodes.iter().map(|e| f(&e.summary)).collect();
            mean_std(&xs)
        }
    };
    AggregateRow {
        task,
        controller,
        replicates: reps.len(),
        episodes: episodes.len(),
        success_rate: metric(&|s| if s.success { 1.0 } else { 0.0 }),
        progress: metric(&|s| s.progress),
        progress_speed: metric(&|s| s.progress_speed),
        episode_length: metric(&|s| s.episode_length as f64),
    }
}

/// Fixed-width table with success and progress in percent.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<20} {:>5} {:>16} {:>16} {:>14} {:>16}",
        "task", "controller", "n", "success %", "progress %", "speed", "length"
    );
    for r in rows {
        let pct = |m: MetricStat| format!("{:.1} ± {:.1}", 100.0 * m.mean, 100.0 * m.std);
        let _ = writeln!(
            out,
            "{:<12} {:<20} {:>5} {:>16} {:>16} {:>14} {:>16}",
            r.task.name(),
            r.controller.name(),
            r.episodes,
            pct(r.success_rate),
            pct(r.progress),
            format!("{:.2} ± {:.2}", r.progress_speed.mean, r.progress_speed.std),
            format!("{:.1} ± {:.1}", r.episode_length.mean, r.episode_length.std),
        );
    }
    out
}

/// Per-episode results and the aggregate row of one evaluation.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    pub logs: Vec<(usize, EpisodeLog)>,
    pub aggregate: AggregateRow,
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<Checkpoint>> {
    paths.iter().map(|p| Checkpoint::load(p)).collect()
}

/// Evaluates `kind` on `seeds` at `band`, once per replicate checkpoint.
pub fn evaluate_controller(
    task: TaskKind,
    kind: ControllerKind,
    checkpoints: &[Checkpoint],
    seeds: &[(u64, u64)],
    band: SpawnBand,
    parallel_envs: usize,
    episode_cap: usize,
) -> Result<EvalReport> {
    let replicate_checkpoints: Vec<Option<&Checkpoint>> =
        if kind.is_learned() { checkpoints.iter().map(Some).collect() } else { vec![None] };
    let mut episodes = Vec::new();
    let mut logs = Vec::new();
    for (r, ck) in replicate_checkpoints.into_iter().enumerate() {
        let mut policy = make_policy(kind, ck)?;
        for log in run_episodes(task, band, seeds, policy.as_mut(), parallel_envs, episode_cap)? {
            episodes.push(EvalEpisode { replicate: r, summary: summarize(&log) });
            logs.push((r, log));
        }
    }
    let aggregate = aggregate(task, kind, &episodes);
    Ok(EvalReport { episodes, logs, aggregate })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| Error::Parse(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(item).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Runs the configured evaluation and writes `episodes.jsonl`,
/// `aggregate.json` and, when enabled, `logs/`.
pub fn cmd_evaluate(config: &BenchmarkConfig) -> Result<EvalReport> {
    config.validate()?;
    let checkpoints = load_checkpoints(&config.checkpoints)?;
    let report = evaluate_controller(
        config.task,
        config.controller,
        &checkpoints,
        &config.seeds.pairs(),
        SpawnBand::for_task(config.task),
        config.parallel_envs,
        config.episode_cap,
    )?;
    fs::create_dir_all(&config.output_dir)?;
    write_jsonl(&config.output_dir.join("episodes.jsonl"), &report.episodes)?;
    write_json(&config.output_dir.join("aggregate.json"), &report.aggregate)?;
    if config.write_logs {
        let dir = config.output_dir.join("logs");
        fs::create_dir_all(&dir)?;
        for (r, log) in &report.logs {
            let name = format!("r{r}_{}_{}.jsonl", log.header.scene_seed, log.header.spawn_seed);
            fs::write(dir.join(name), log.to_jsonl())?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub band: [f64; 2],
    /// Seeds whose spawn fits the band.
    pub seeds_used: usize,
    pub joint: AggregateRow,
    pub factored: AggregateRow,
    /// Joint minus factored success rate.
    pub success_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Whether the difference never decreases from band to band.
    pub difference_non_decreasing: bool,
}

/// Seeds from `seeds` that can spawn inside `band`.
pub fn seeds_in_band(task: TaskKind, seeds: &[(u64, u64)], band: SpawnBand) -> Vec<(u64, u64)> {
    seeds
        .iter()
        .copied()
        .filter(|(scene, spawn)| Env::reset_in_band(task, *scene, *spawn, band).is_ok())
        .collect()
}

/// Evaluates the joint and factored controllers in every band and writes
/// `sweep.json`.
pub fn cmd_distance_sweep(config: &BenchmarkConfig) -> Result<SweepReport> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("distance sweep needs a [sweep] table".into()))?;
    let joint_ck = load_checkpoints(&config.checkpoints)?;
    let factored_ck = load_checkpoints(&sweep.factored_checkpoints)?;
    let seeds = config.seeds.pairs();
    let mut rows = Vec::new();
    for [lo, hi] in &sweep.bands {
        let band = SpawnBand::new(*lo, *hi)?;
        let usable = seeds_in_band(config.task, &seeds, band);
        let run = |kind, cks: &[Checkpoint]| {
            evaluate_controller(config.task, kind, cks, &usable, band, config.parallel_envs, config.episode_cap)
                .map(|r| r.aggregate)
        };
        let joint = run(config.controller, &joint_ck)?;
        let factored = run(sweep.factored, &factored_ck)?;
        rows.push(SweepRow {
            band: [*lo, *hi],
            seeds_used: usable.len(),
            success_difference: joint.success_rate.mean - factored.success_rate.mean,
            joint,
            factored,
        });
    }
    let difference_non_decreasing = rows.windows(2).all(|w| w[1].success_difference >= w[0].success_difference);
    let report = SweepReport { rows, difference_non_decreasing };
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("sweep.json"), &report)?;
    Ok(report)
}

/// Training job file: replicate seeds plus a `[train]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    #[serde(default = "default_replicates")]
    pub replicates: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_replicates() -> Vec<u64> {
    vec![0, 1, 2]
}

impl TrainJob {
    pub fn from_toml(text: &str) -> Result<Self> {
        let job: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if job.replicates.is_empty() {
            return Err(Error::Config("replicates must not be empty".into()));
        }
        job.train.validate()?;
        Ok(job)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_seed{seed}.ckpt"))
}

pub fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("curve_seed{seed}.jsonl"))
}

/// Mean ± std across replicates at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedCurveRecord {
    pub iteration: u64,
    pub env_steps: u64,
    pub replicates: usize,
    pub eval_success: Option<MetricStat>,
    pub eval_progress: Option<MetricStat>,
    pub mean_return: Option<MetricStat>,
}

/// Joins per-replicate curves on iteration, keeping iterations every
/// replicate reached.
pub fn combine_curves(curves: &[Vec<CurveRecord>]) -> Vec<CombinedCurveRecord> {
    let Some(first) = curves.first() else { return Vec::new() };
    let mut out = Vec::new();
    for rec in first {
        let at: Vec<&CurveRecord> =
            curves.iter().filter_map(|c| c.iter().find(|r| r.iteration == rec.iteration)).collect();
        if at.len() != curves.len() {
            continue;
        }
        let stat = |f: &dyn Fn(&CurveRecord) -> Option<f64>| -> Option<MetricStat> {
            let xs: Option<Vec<f64>> = at.iter().map(|r| f(r)).collect();
            xs.map(|v| mean_std(&v))
        };
        out.push(CombinedCurveRecord {
            iteration: rec.iteration,
            env_steps: rec.env_steps,
            replicates: at.len(),
            eval_success: stat(&|r| r.eval_success),
            eval_progress: stat(&|r| r.eval_progress),
            mean_return: stat(&|r| r.mean_return),
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoints: Vec<PathBuf>,
    pub combined: Vec<CombinedCurveRecord>,
    /// Final held-out success per replicate.
    pub final_success: Vec<Option<f64>>,
}

/// Trains every replicate, resuming from `resume_dir` where a matching
/// checkpoint exists. Writes per-replicate checkpoints and curves plus
/// `curve_combined.jsonl`.
pub fn cmd_train(
    job: &TrainJob,
    resume_dir: Option<&Path>,
    progress: &mut dyn FnMut(u64, &CurveRecord),
) -> Result<TrainReport> {
    job.train.validate()?;
    let dir = &job.output_dir;
    fs::create_dir_all(dir)?;
    let mut checkpoints = Vec::new();
    let mut curves = Vec::new();
    let mut final_success = Vec::new();
    for &seed in &job.replicates {
        let config = TrainConfig { seed, ..job.train.clone() };
        let resume = match resume_dir.map(|d| checkpoint_path(d, seed)) {
            Some(p) if p.exists() => Some(Checkpoint::load(&p)?),
            _ => None,
        };
        let curve_file = curve_path(dir, seed);
        let mut history: Vec<CurveRecord> = match (&resume, resume_dir) {
            (Some(_), Some(d)) if curve_path(d, seed).exists() => read_jsonl(&curve_path(d, seed))?,
            _ => Vec::new(),
        };
        let mut sink = fs::File::create(&curve_file)?;
        for rec in &history {
            writeln!(sink, "{}", serde_json::to_string(rec).map_err(|e| Error::Parse(e.to_string()))?)?;
        }
        let outcome = train(&config, resume, &mut |rec| {
            writeln!(sink, "{}", serde_json::to_string(rec).map_err(|e| Error::Parse(e.to_string()))?)?;
            progress(seed, rec);
            Ok(())
        })?;
        let path = checkpoint_path(dir, seed);
        outcome.checkpoint.save(&path)?;
        checkpoints.push(path);
        final_success.push(outcome.curve.last().and_then(|r| r.eval_success));
        history.extend(outcome.curve);
        curves.push(history);
    }
    let combined = combine_curves(&curves);
    write_jsonl(&dir.join("curve_combined.jsonl"), &combined)?;
    Ok(TrainReport { checkpoints, combined, final_success })
}

/// Writes `scene_<seed>.toml` for each seed in `start..start+count`.
/// Returns the written paths and the seeds that failed to generate.
pub fn cmd_gen_scenes(
    task: TaskKind,
    start: u64,
    count: usize,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<(u64, String)>)> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut failed = Vec::new();
    for seed in start..start + count as u64 {
        match generate_scene(task, seed) {
            Ok(scene) => {
                let path = out_dir.join(format!("scene_{seed}.toml"));
                fs::write(&path, scene_to_text(&scene)?)?;
                written.push(path);
            }
            Err(e) => failed.push((seed, e.to_string())),
        }
    }
    Ok((written, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(success: bool, progress: f64, len: usize) -> EpisodeSummary {
        EpisodeSummary {
            task: TaskKind::DoorPush,
            scene_seed: 0,
            spawn_seed: 0,
            success,
            progress,
            episode_length: len,
            progress_speed: crate::env::progress_speed(progress, len),
            return_total: 0.0,
        }
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let text = r#"
task = "door_push"
controller = "scripted_oracle"
[seeds]
start = 10
count = 4
"#;
        let c = BenchmarkConfig::from_toml(text).unwrap();
        assert_eq!(c.seeds.pairs().len(), 4);
        assert_eq!(c.episode_cap, 500);
        let err = BenchmarkConfig::from_toml(&format!("{text}bogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut c = BenchmarkConfig::new(TaskKind::DoorPush, ControllerKind::LearnedJoint);
        assert!(c.validate().is_err());
        c.checkpoints.push("x.ckpt".into());
        c.validate().unwrap();
        c.seeds.count = 0;
        assert!(c.validate().is_err());
        let mut c = BenchmarkConfig::new(TaskKind::CleanTable, ControllerKind::ScriptedOracle);
        c.episode_cap = 501;
        assert!(c.validate().is_err());
        c.episode_cap = 500;
        c.sweep = Some(SweepConfig {
            bands: vec![[4.0, 5.0]],
            factored: ControllerKind::ScriptedTwoStage,
            factored_checkpoints: vec![],
        });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn aggregate_over_episodes_and_replicates() {
        let eps = vec![
            EvalEpisode { replicate: 0, summary: summary(true, 1.0, 100) },
            EvalEpisode { replicate: 0, summary: summary(false, 0.5, 500) },
        ];
        let row = aggregate(TaskKind::DoorPush, ControllerKind::ScriptedOracle, &eps);
        assert_eq!(row.success_rate, MetricStat { mean: 0.5, std: 0.5 });
        assert_eq!(row.episode_length.mean, 300.0);
        let mut eps3 = eps.clone();
        eps3.push(EvalEpisode { replicate: 1, summary: summary(true, 1.0, 100) });
        eps3.push(EvalEpisode { replicate: 1, summary: summary(true, 1.0, 100) });
        let row = aggregate(TaskKind::DoorPush, ControllerKind::LearnedJoint, &eps3);
        assert_eq!(row.replicates, 2);
        assert_eq!(row.success_rate, MetricStat { mean: 0.75, std: 0.25 });
    }

    #[test]
    fn combined_curve_needs_every_replicate() {
        let rec = |iteration, s| CurveRecord {
            iteration,
            env_steps: iteration * 640,
            mean_return: None,
            train_success: None,
            eval_success: Some(s),
            eval_progress: None,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            clip_fraction: 0.0,
            approx_kl: 0.0,
            grad_norm: 0.0,
        };
        let c = combine_curves(&[vec![rec(1, 0.2), rec(2, 0.4)], vec![rec(1, 0.4)]]);
        assert_eq!(c.len(), 1);
        let s = c[0].eval_success.unwrap();
        assert!((s.mean - 0.3).abs() < 1e-12 && (s.std - 0.1).abs() < 1e-12);
        assert!(c[0].eval_progress.is_none());
    }

    #[test]
    fn train_job_errors_name_the_field() {
        let err = TrainJob::from_toml("replicates = [0]\n[train]\nclip = \"wide\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("clip") && msg.contains("line"), "{msg}");
        let err = TrainJob::from_toml("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
        let job = TrainJob::from_toml("[train]\ncontroller = \"learned_mode_gated\"\n").unwrap();
        assert_eq!(job.replicates, vec![0, 1, 2]);
        assert_eq!(job.train.network_config().action_dim, 7);
    }
}
