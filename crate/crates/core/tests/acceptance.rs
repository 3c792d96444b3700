//! Acceptance suite: runs every criterion and prints one verdict line each.
//!
//! Criteria 8 and 9 train nine policies for 2×10^6 steps each, which takes
//! over an hour on one core. `ACCEPTANCE_SKIP_TRAINING=1` reports them as
//! skipped instead. The process exits non-zero when a hard criterion fails.

use mmbench::agents::checkpoint::Checkpoint;
use mmbench::agents::{ControllerKind, Gating, LearnedController, Network, NetworkConfig, ScriptedPlanner};
use mmbench::env::{
    is_success, progress_speed, summarize, BatchPolicy, Env, EpisodeLog, TaskKind, MAX_EPISODE_STEPS, OBS_DIM,
};
use mmbench::error::Error;
use mmbench::harness::server::{serve_tcp, RemoteEnv, Response};
use mmbench::harness::{make_policy, run_episodes};
use mmbench::interaction::panel_hits_base;
use mmbench::kinematics::RAW_ACTION_DIM;
use mmbench::ppo::{
    compute_gae, held_out_seeds, ppo_loss_and_grad, train, usable_seeds, RolloutBuffer, TrainConfig,
    HELD_OUT_SCENE_BASE,
};
use mmbench::reward::{efficiency_reward, manip_reward, nav_reward, RewardState, RewardWeights};
use mmbench::scene::{DoorMode, SpawnBand};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Outcome = mmbench::Result<(Status, String)>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    /// Soft criterion not met; reported, not fatal.
    Flag,
    Skip,
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

// ---------------------------------------------------------------------------
// Fuzz driver shared by criteria 1, 2 and 5.

/// Mixes noisy oracle actions with uniform random ones so that episodes
/// both reach the interesting events and wander into odd states.
struct Fuzzer {
    rng: ChaCha8Rng,
    oracle: ScriptedPlanner,
    random_share: f64,
}

impl Fuzzer {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random_share = [0.05, 0.3, 1.0][rng.gen_range(0..3)];
        Self { rng, oracle: ScriptedPlanner::oracle(), random_share }
    }

    fn act(&mut self, env: &Env) -> [f64; RAW_ACTION_DIM] {
        let planned = self.oracle.act(env).ok();
        let mut a = [0.0; RAW_ACTION_DIM];
        match planned {
            Some(p) if self.rng.gen::<f64>() >= self.random_share => {
                for (k, v) in a.iter_mut().enumerate() {
                    *v = p[k] + self.rng.gen_range(-0.3..0.3);
                }
            }
            _ => {
                for v in a.iter_mut() {
                    *v = self.rng.gen_range(-1.3..1.3);
                }
            }
        }
        a
    }
}

const TASKS: [TaskKind; 4] = [TaskKind::DoorPush, TaskKind::DoorPull, TaskKind::OpenFridge, TaskKind::CleanTable];

fn fuzz_seeds(task: TaskKind, count: usize) -> Vec<(u64, u64)> {
    usable_seeds(task, 7_000_000, count)
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut problems = Vec::new();
    let w = RewardWeights::for_task(TaskKind::DoorPush);

    let mut rs = RewardState::new(2.0, 1.0);
    let (nav, ..) = nav_reward(&mut rs, &w, 1.9, false)?;
    if (nav - 2.0 * 0.1).abs() > 1e-9 {
        problems.push(format!("nav shaping {nav}"));
    }
    let mut rs = RewardState::new(3.0, 0.5);
    let (_, shaping, ..) = manip_reward(&mut rs, &w, 0.4, 0.0, false, false)?;
    let want = 0.02 * (-5.0f64 * 0.4).exp() * 1000.0 * 0.1;
    if (shaping - want).abs() > 1e-9 || (shaping - 0.27067).abs() > 1e-5 {
        problems.push(format!("manipulation shaping {shaping}"));
    }
    let eff = efficiency_reward(&w, 0.1, true)?;
    if (eff - (-0.011)).abs() > 1e-9 {
        problems.push(format!("efficiency {eff}"));
    }

    // One-time bonuses over 1000 fuzzed episodes.
    let mut episodes = 0;
    let mut seen = BTreeMap::<&str, usize>::new();
    for task in TASKS {
        for (i, (scene, spawn)) in fuzz_seeds(task, 250).into_iter().enumerate() {
            let (mut env, _) = Env::reset(task, scene, spawn)?;
            let mut fz = Fuzzer::new(scene ^ 0x51);
            let (mut reached, mut grasped) = (false, false);
            loop {
                let r = env.step(&fz.act(&env))?;
                reached |= env.base_distance() <= env.weights.d_reach;
                grasped |= r.info.holding;
                if r.terminated || r.truncated {
                    break;
                }
            }
            let log = env.log();
            let count = |f: &dyn Fn(&mmbench::env::StepRecord) -> f64, value: f64| -> (usize, bool) {
                let hits: Vec<f64> = log.steps.iter().map(f).filter(|v| *v != 0.0).collect();
                (hits.len(), hits.iter().all(|v| *v == value))
            };
            let success = env.summary().success;
            let checks = [
                ("reach", count(&|s| s.reward.reach_bonus, 2.0), reached),
                ("grasp", count(&|s| s.reward.grasp_bonus, 2.0), grasped && task.rewards_grasp()),
                ("finish", count(&|s| s.reward.finish_bonus, 20.0), success),
            ];
            for (name, (n, exact), expected) in checks {
                if n != usize::from(expected) || !exact {
                    problems.push(format!("{task} episode {i}: {name} paid {n} times, expected {}", usize::from(expected)));
                }
                *seen.entry(name).or_default() += n;
            }
            episodes += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        problems.push(format!("runtime {secs:.1} s"));
    }
    let detail = format!(
        "{episodes} episodes, bonuses paid: reach {} grasp {} finish {}; {:.1} s{}",
        seen["reach"],
        seen["grasp"],
        seen["finish"],
        secs,
        first_problems(&problems)
    );
    Ok((verdict(problems.is_empty() && episodes == 1000), detail))
}

fn first_problems(problems: &[String]) -> String {
    if problems.is_empty() {
        String::new()
    } else {
        format!("; {} problems, first: {}", problems.len(), problems[0])
    }
}

fn criterion_2() -> Outcome {
    let mut problems = Vec::new();
    let mut episodes = 0;
    for task in TASKS {
        for (scene, spawn) in fuzz_seeds(task, 100) {
            let (mut env, _) = Env::reset(task, scene, spawn)?;
            let d_init = env.base_distance();
            let mut d_min = d_init;
            let mut reached = false;
            let mut fz = Fuzzer::new(scene ^ 0x77);
            let mut monotone = true;
            let mut last_progress = 0.0;
            loop {
                let r = env.step(&fz.act(&env))?;
                let d = env.base_distance();
                if !reached {
                    d_min = d_min.min(d);
                    reached = d <= env.weights.d_reach;
                }
                monotone &= r.info.progress >= last_progress;
                last_progress = r.info.progress;
                if r.terminated || r.truncated {
                    break;
                }
            }
            let log = env.log();
            let nav: f64 = log.steps.iter().map(|s| s.reward.nav_shaping).sum();
            let want = env.weights.w_nav_shaping * (d_init - d_min);
            if (nav - want).abs() > 1e-9 {
                problems.push(format!("{task} {scene}: nav shaping sum {nav} vs {want}"));
            }
            let monotone_task = matches!(task, TaskKind::DoorPush | TaskKind::CleanTable);
            if monotone_task {
                if !monotone {
                    problems.push(format!("{task} {scene}: progress decreased"));
                }
                let prog: f64 = log.steps.iter().map(|s| s.reward.progress_term).sum();
                let want = env.weights.w_progress * env.progress();
                if (prog - want).abs() > 1e-9 {
                    problems.push(format!("{task} {scene}: progress sum {prog} vs {want}"));
                }
            }
            episodes += 1;
        }
    }
    Ok((verdict(problems.is_empty()), format!("{episodes} episodes{}", first_problems(&problems))))
}

fn dir_snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn random_learned_policy(seed: u64) -> LearnedController {
    let network = Network::new(NetworkConfig::standard(RAW_ACTION_DIM)).unwrap();
    let params = network.init(&mut ChaCha8Rng::seed_from_u64(seed));
    LearnedController::new(network, params, Gating::Joint)
}

fn criterion_3() -> Outcome {
    let mut problems = Vec::new();
    let tmp = tempfile::tempdir()?;

    // Two full runs of the evaluate command.
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mmbench"))
            .args(["evaluate", "--task", "door_pull", "--controller", "scripted_oracle", "--count", "40", "--out"])
            .arg(&out)
            .output()?;
        if !status.status.success() {
            return Ok((Status::Fail, format!("evaluate failed: {}", String::from_utf8_lossy(&status.stderr))));
        }
        snapshots.push(dir_snapshot(&out));
    }
    let files = snapshots[0].len();
    if snapshots[0] != snapshots[1] {
        problems.push("evaluate outputs differ between runs".to_string());
    }

    // One environment versus twenty over the same seed list.
    let band = SpawnBand::for_task(TaskKind::DoorPush);
    let seeds = held_out_seeds(TaskKind::DoorPush, 40);
    let summaries = |n: usize, learned: bool| -> mmbench::Result<Vec<_>> {
        let mut policy: Box<dyn BatchPolicy> =
            if learned { Box::new(random_learned_policy(11)) } else { make_policy(ControllerKind::ScriptedOracle, None)? };
        Ok(run_episodes(TaskKind::DoorPush, band, &seeds, policy.as_mut(), n, MAX_EPISODE_STEPS)?
            .iter()
            .map(summarize)
            .collect::<Vec<_>>())
    };
    for learned in [false, true] {
        if summaries(1, learned)? != summaries(20, learned)? {
            problems.push(format!("N=1 and N=20 differ (learned policy: {learned})"));
        }
    }

    // Server-driven versus in-process episodes.
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    let pairs: Vec<(TaskKind, u64, u64)> = TASKS
        .iter()
        .flat_map(|t| usable_seeds(*t, 3_000_000, 3).into_iter().map(move |(a, b)| (*t, a, b)))
        .collect();
    let server = std::thread::spawn({
        let n = pairs.len();
        move || serve_tcp(listener, TaskKind::DoorPush, Some(n))
    });
    for (task, scene, spawn) in &pairs {
        let (mut env, _) = Env::reset(*task, *scene, *spawn)?;
        let mut fz = Fuzzer::new(*scene);
        let mut remote = RemoteEnv::connect(&addr)?;
        let obs = remote.reset(*task, *scene, *spawn)?;
        if obs != env.observation() {
            problems.push(format!("{task} {scene}: reset observations differ"));
        }
        loop {
            let a = fz.act(&env);
            let local = env.step(&a)?;
            let Response::Step { observation, reward, terminated, truncated, info } = remote.step(&a)? else {
                unreachable!("step returns a step reply")
            };
            let same = observation == local.observation
                && reward == local.reward
                && terminated == local.terminated
                && truncated == local.truncated
                && info == local.info;
            if !same {
                problems.push(format!("{task} {scene}: step {} differs", env.steps));
                break;
            }
            if local.terminated || local.truncated {
                break;
            }
        }
        if remote.log()? != env.log().to_jsonl() {
            problems.push(format!("{task} {scene}: episode logs differ"));
        }
        remote.close()?;
    }
    server.join().expect("server thread")?;
    Ok((
        verdict(problems.is_empty()),
        format!(
            "{files} output files identical across runs; 40 seeds at N=1/N=20; {} server episodes{}",
            pairs.len(),
            first_problems(&problems)
        ),
    ))
}

fn criterion_4() -> Outcome {
    let mut problems = Vec::new();
    if !is_success(TaskKind::DoorPush, 0.91) || !is_success(TaskKind::DoorPull, 0.91) {
        problems.push("door at 0.91 should succeed".into());
    }
    if is_success(TaskKind::OpenFridge, 0.69) {
        problems.push("fridge at 0.69 should fail".into());
    }
    if is_success(TaskKind::CleanTable, 0.75) {
        problems.push("table at 0.75 should fail".into());
    }
    let speed = progress_speed(0.9, 225);
    if (speed - 0.9 / (225.0 / 500.0)).abs() > 1e-9 || (speed - 2.0).abs() > 1e-9 {
        problems.push(format!("progress speed {speed}"));
    }
    let (mut env, _) = Env::reset(TaskKind::DoorPush, HELD_OUT_SCENE_BASE, 1)?;
    let mut last = None;
    for _ in 0..MAX_EPISODE_STEPS {
        last = Some(env.step(&[0.0; RAW_ACTION_DIM])?);
    }
    let last = last.expect("steps ran");
    if !last.truncated || last.terminated || env.steps != 500 {
        problems.push("500th step is not a truncation".into());
    }
    if !matches!(env.step(&[0.0; RAW_ACTION_DIM]), Err(Error::Usage(_))) {
        problems.push("stepping past the cap is not a usage error".into());
    }
    let s = env.summary();
    if s.episode_length != 500 || s.success {
        problems.push("truncated summary".into());
    }
    Ok((verdict(problems.is_empty()), format!("speed(0.9, 225) = {speed}{}", first_problems(&problems))))
}

fn criterion_5() -> Outcome {
    let mut problems = Vec::new();
    let mut steps = 0usize;
    let mut theta_moves = 0usize;
    let mut dirt_removed = 0usize;
    let mut episode = 0u64;
    while steps < 10_000 {
        let task = TASKS[(episode % 4) as usize];
        let (scene, spawn) = usable_seeds(task, 5_000_000 + episode * 17, 1)[0];
        let (mut env, _) = Env::reset(task, scene, spawn)?;
        let mut fz = Fuzzer::new(episode);
        episode += 1;
        loop {
            let before = env.clone();
            let r = env.step(&fz.act(&env))?;
            steps += 1;
            if let (Some(d0), Some(d1)) = (before.door, env.door) {
                let spec = d1.spec;
                if !(0.0..=spec.theta_max).contains(&d1.theta) {
                    problems.push(format!("theta {} outside [0, {}]", d1.theta, spec.theta_max));
                }
                match spec.mode {
                    DoorMode::Push if d1.theta < d0.theta => problems.push("push closed the door".into()),
                    DoorMode::Pull if !before.robot.holding && !env.robot.holding && d1.theta != d0.theta => {
                        problems.push("pull door moved without a grasp".into())
                    }
                    _ => {}
                }
                if panel_hits_base(&spec, d1.theta, &env.robot) {
                    problems.push(format!("{task} {scene}: panel intersects the base after step {}", env.steps));
                }
                theta_moves += usize::from(d1.theta != d0.theta);
            }
            if let (Some(a), Some(b)) = (&before.dirt, &env.dirt) {
                if b.remaining.len() > a.remaining.len() {
                    problems.push("dirt reappeared".into());
                }
                dirt_removed += a.remaining.len() - b.remaining.len().min(a.remaining.len());
            }
            if r.terminated || r.truncated || steps >= 10_000 {
                break;
            }
        }
    }
    Ok((
        verdict(problems.is_empty()),
        format!(
            "{steps} steps over {episode} episodes, {theta_moves} door motions, {dirt_removed} dirt points cleaned{}",
            first_problems(&problems)
        ),
    ))
}

fn scripted_rates(kind: ControllerKind, task: TaskKind) -> mmbench::Result<(f64, f64, f64, usize)> {
    let seeds = usable_seeds(task, HELD_OUT_SCENE_BASE, 200);
    let mut policy = make_policy(kind, None)?;
    let logs: Vec<EpisodeLog> =
        run_episodes(task, SpawnBand::for_task(task), &seeds, policy.as_mut(), 20, MAX_EPISODE_STEPS)?;
    let n = logs.len() as f64;
    let summaries: Vec<_> = logs.iter().map(summarize).collect();
    let success = summaries.iter().filter(|s| s.success && s.episode_length <= 500).count() as f64 / n;
    let progress = summaries.iter().map(|s| s.progress).sum::<f64>() / n;
    let max_progress = summaries.iter().map(|s| s.progress).fold(0.0, f64::max);
    Ok((success, progress, max_progress, logs.len()))
}

fn criterion_6() -> Outcome {
    let targets = [
        (TaskKind::DoorPush, 0.90),
        (TaskKind::CleanTable, 0.80),
        (TaskKind::DoorPull, 0.75),
        (TaskKind::OpenFridge, 0.70),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (task, target) in targets {
        let (success, _, _, n) = scripted_rates(ControllerKind::ScriptedOracle, task)?;
        ok &= success >= target && n == 200;
        parts.push(format!("{task} {:.1}% (≥ {:.0}%)", 100.0 * success, 100.0 * target));
    }
    Ok((verdict(ok), parts.join(", ")))
}

fn criterion_7() -> Outcome {
    let (pull_success, ..) = scripted_rates(ControllerKind::ScriptedTwoStage, TaskKind::DoorPull)?;
    let (table_success, table_progress, table_max, _) =
        scripted_rates(ControllerKind::ScriptedTwoStage, TaskKind::CleanTable)?;
    let ok = pull_success <= 0.05 && table_progress < 0.75;
    Ok((
        verdict(ok),
        format!(
            "door_pull success {:.1}% (≤ 5%); clean_table mean progress {:.3} (< 0.75), best episode {:.3}, success {:.1}%",
            100.0 * pull_success,
            table_progress,
            table_max,
            100.0 * table_success
        ),
    ))
}

struct TrainedRun {
    controller: ControllerKind,
    seed: u64,
    success: f64,
    seconds: f64,
    checkpoint: Checkpoint,
}

fn train_run(controller: ControllerKind, seed: u64) -> mmbench::Result<TrainedRun> {
    let config = TrainConfig {
        seed,
        eval_interval: 0,
        eval_episodes: 300,
        ..TrainConfig::for_controller(TaskKind::DoorPush, controller)
    };
    let started = Instant::now();
    let outcome = train(&config, None, &mut |_| Ok(()))?;
    let seconds = started.elapsed().as_secs_f64();
    let success = outcome.curve.last().and_then(|r| r.eval_success).unwrap_or(0.0);
    println!(
        "  trained {controller} seed {seed}: {} steps, held-out success {:.1}%, {:.0} s",
        outcome.checkpoint.env_steps,
        100.0 * success,
        seconds
    );
    Ok(TrainedRun { controller, seed, success, seconds, checkpoint: outcome.checkpoint })
}

/// Sampled-action success of a checkpoint on held-out seeds, for diagnosis.
fn sampled_success(ck: &Checkpoint, episodes: usize) -> mmbench::Result<f64> {
    let network = ck.network()?;
    let mut policy = LearnedController::new(network, ck.params.clone(), Gating::for_kind(ck.controller)).stochastic(3);
    let seeds = held_out_seeds(TaskKind::DoorPush, episodes);
    let logs = run_episodes(
        TaskKind::DoorPush,
        SpawnBand::for_task(TaskKind::DoorPush),
        &seeds,
        &mut policy,
        20,
        MAX_EPISODE_STEPS,
    )?;
    Ok(logs.iter().filter(|l| summarize(l).success).count() as f64 / logs.len() as f64)
}

fn criterion_8(runs: &[TrainedRun]) -> Outcome {
    let run = runs
        .iter()
        .find(|r| r.controller == ControllerKind::LearnedJoint && r.seed == 0)
        .expect("joint seed 0 is trained");
    let sampled = sampled_success(&run.checkpoint, 300)?;
    let ok = run.success >= 0.5 && run.seconds <= 3600.0 && run.checkpoint.env_steps <= 2_000_000;
    Ok((
        verdict(ok),
        format!(
            "mean-action held-out success {:.1}% (≥ 50%) after {} steps in {:.0} s; sampled-action success {:.1}% for reference",
            100.0 * run.success,
            run.checkpoint.env_steps,
            run.seconds,
            100.0 * sampled
        ),
    ))
}

fn criterion_9(runs: &[TrainedRun]) -> Outcome {
    let mean = |c: ControllerKind| {
        let xs: Vec<f64> = runs.iter().filter(|r| r.controller == c).map(|r| r.success).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let joint = mean(ControllerKind::LearnedJoint);
    let gated = mean(ControllerKind::LearnedModeGated);
    let staged = mean(ControllerKind::LearnedTwoStage);
    let ordered = joint >= gated && gated >= staged;
    Ok((
        if ordered { Status::Pass } else { Status::Flag },
        format!(
            "joint {:.1}% ≥ mode-gated {:.1}% ≥ two-stage {:.1}% over 3 seeds{}",
            100.0 * joint,
            100.0 * gated,
            100.0 * staged,
            if ordered { "" } else { "; inversion flagged for investigation" }
        ),
    ))
}

fn criterion_10() -> Outcome {
    let mut problems = Vec::new();

    // GAE on constant rewards.
    let n = 32;
    let (g, l) = (0.99, 0.95);
    let r = Array2::from_elem((n, 3), 1.0);
    let v = Array2::zeros((n, 3));
    let d = Array2::from_elem((n, 3), false);
    let (adv, _) = compute_gae(&r, &v, &d, &Array1::zeros(3), g, l)?;
    let mut gae_err: f64 = 0.0;
    for t in 0..n {
        let gl: f64 = g * l;
        let closed = (1.0 - gl.powi((n - t) as i32)) / (1.0 - gl);
        for j in 0..3 {
            gae_err = gae_err.max((adv[[t, j]] - closed).abs());
        }
    }
    if gae_err > 1e-9 {
        problems.push(format!("GAE error {gae_err:e}"));
    }

    // Surrogate gradient on a small recurrent policy.
    let net = Network::new(NetworkConfig { obs_dim: 2, encoder: vec![], hidden: 2, action_dim: 2 })?;
    let params_n = net.param_count();
    if params_n > 50 {
        problems.push(format!("test network has {params_n} parameters"));
    }
    let mut p = net.init(&mut ChaCha8Rng::seed_from_u64(21));
    for v in p.values.iter_mut() {
        *v = *v * 1.5 + 0.05;
    }
    let (t_len, b) = (6, 3);
    let mut buf = RolloutBuffer::new(t_len, b, 2, 2, 2);
    buf.obs = Array3::from_shape_fn((t_len, b, 2), |(t, i, j)| ((t * 3 + i * 5 + j) as f64 * 0.7).sin());
    buf.actions = Array3::from_shape_fn((t_len, b, 2), |(t, i, j)| ((t + i * 2 + j * 3) as f64 * 1.1).cos());
    buf.h0 = Array2::from_shape_fn((b, 2), |(i, j)| 0.3 * ((i + 2 * j) as f64).sin());
    buf.starts[[0, 0]] = true;
    buf.starts[[4, 1]] = true;
    let cache = net.forward_sequence(&p, &buf.obs, &buf.starts, &buf.h0)?;
    for t in 0..t_len {
        for i in 0..b {
            let mean: Vec<f64> = (0..2).map(|k| cache.mean[[t, i, k]]).collect();
            let act: Vec<f64> = (0..2).map(|k| buf.actions[[t, i, k]]).collect();
            // Keep ratios inside the clip range so the loss is smooth here.
            let offset = 0.05 * ((t * 2 + i) as f64 * 1.3).sin();
            buf.log_probs[[t, i]] = mmbench::agents::policy::gaussian_log_prob(&act, &mean, &cache.log_std) + offset;
        }
    }
    let adv = Array2::from_shape_fn((t_len, b), |(t, i)| ((t * 7 + i) as f64 * 0.6).sin());
    let ret = Array2::from_shape_fn((t_len, b), |(t, i)| ((t + 3 * i) as f64 * 0.4).cos());
    let cfg = TrainConfig::default();
    let (_, grad) = ppo_loss_and_grad(&net, &p, &buf, &adv, &ret, &cfg)?;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..params_n {
        let mut plus = p.clone();
        plus.values[i] += eps;
        let mut minus = p.clone();
        minus.values[i] -= eps;
        let lp = ppo_loss_and_grad(&net, &plus, &buf, &adv, &ret, &cfg)?.0.loss;
        let lm = ppo_loss_and_grad(&net, &minus, &buf, &adv, &ret, &cfg)?.0.loss;
        let fd = (lp - lm) / (2.0 * eps);
        let scale = fd.abs().max(grad[i].abs());
        let rel = if scale < 1e-9 { 0.0 } else { (fd - grad[i]).abs() / scale };
        worst = worst.max(rel);
    }
    if worst > 1e-4 {
        problems.push(format!("gradient relative error {worst:e}"));
    }
    Ok((
        verdict(problems.is_empty()),
        format!(
            "GAE max error {gae_err:e}; {params_n}-parameter GRU policy, worst relative gradient error {worst:e}{}",
            first_problems(&problems)
        ),
    ))
}

fn report(id: u8, name: &str, started: Instant, outcome: Outcome, statuses: &mut Vec<Status>) {
    let (status, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (Status::Fail, format!("error: {e}")),
    };
    let tag = match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Flag => "FLAG",
        Status::Skip => "SKIP",
    };
    println!("[{tag}] {id:>2}. {name}: {detail} ({:.1} s)", started.elapsed().as_secs_f64());
    statuses.push(status);
}

fn main() {
    assert_eq!(OBS_DIM, 19);
    let skip_training = std::env::var("ACCEPTANCE_SKIP_TRAINING").is_ok_and(|v| v != "0" && !v.is_empty());
    let mut statuses = Vec::new();
    let quick: [(u8, &str, fn() -> Outcome); 7] = [
        (1, "reward arithmetic", criterion_1),
        (2, "telescoping sums", criterion_2),
        (3, "determinism", criterion_3),
        (4, "metrics", criterion_4),
        (5, "articulation properties", criterion_5),
        (6, "oracle solvability", criterion_6),
        (7, "factored baseline failure", criterion_7),
    ];
    for (id, name, f) in quick {
        let t = Instant::now();
        report(id, name, t, f(), &mut statuses);
    }

    if skip_training {
        println!("[SKIP]  8. learning smoke test: ACCEPTANCE_SKIP_TRAINING is set");
        println!("[SKIP]  9. controller ordering: ACCEPTANCE_SKIP_TRAINING is set");
        statuses.extend([Status::Skip, Status::Skip]);
    } else {
        let t = Instant::now();
        let mut runs = Vec::new();
        let mut failure = None;
        'outer: for controller in
            [ControllerKind::LearnedJoint, ControllerKind::LearnedModeGated, ControllerKind::LearnedTwoStage]
        {
            for seed in 0..3 {
                match train_run(controller, seed) {
                    Ok(r) => runs.push(r),
                    Err(e) => {
                        failure = Some(e);
                        break 'outer;
                    }
                }
            }
        }
        match failure {
            Some(e) => {
                let msg = e.to_string();
                report(8, "learning smoke test", t, Err(e), &mut statuses);
                report(9, "controller ordering", t, Err(Error::Validation(msg)), &mut statuses);
            }
            None => {
                report(8, "learning smoke test", t, criterion_8(&runs), &mut statuses);
                report(9, "controller ordering", t, criterion_9(&runs), &mut statuses);
            }
        }
    }

    let t = Instant::now();
    report(10, "policy-gradient math", t, criterion_10(), &mut statuses);

    let failed = statuses.iter().filter(|s| **s == Status::Fail).count();
    println!(
        "acceptance: {} pass, {failed} fail, {} flagged, {} skipped",
        statuses.iter().filter(|s| **s == Status::Pass).count(),
        statuses.iter().filter(|s| **s == Status::Flag).count(),
        statuses.iter().filter(|s| **s == Status::Skip).count()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
