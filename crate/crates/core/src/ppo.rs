//! Synchronous clipped-surrogate policy optimisation with generalised
//! advantage estimation over recurrent rollouts.

use crate::agents::checkpoint::{AdamState, Checkpoint};
use crate::agents::policy::{gaussian_entropy, gaussian_log_prob, sample_action};
use crate::agents::{ControllerKind, Gating, LearnedController, Network, NetworkConfig, PolicyParams, StageLatch};
use crate::env::{
    run_vectorized, splitmix64, EpisodeSummary, Env, SeedSource, TaskKind, VecEnv, OBS_DIM,
};
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Scene seeds for held-out evaluation start here, far from training seeds.
pub const HELD_OUT_SCENE_BASE: u64 = 1_000_000;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub controller: ControllerKind,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    /// Environment-wise splits of each batch per epoch.
    pub minibatches: usize,
    pub parallel_envs: usize,
    pub samples_per_iteration: usize,
    pub total_steps: u64,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
    pub seed: u64,
    /// Number of distinct training scenes cycled through.
    pub train_scenes: usize,
    /// Iterations between held-out evaluations; 0 evaluates only at the end.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Defaults to the standard architecture sized for the controller.
    pub network: Option<NetworkConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::DoorPush,
            controller: ControllerKind::LearnedJoint,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.1,
            lr_policy: 5e-5,
            lr_value: 5e-5,
            entropy_coef: 0.0025,
            value_coef: 0.5,
            epochs: 4,
            minibatches: 1,
            parallel_envs: 20,
            samples_per_iteration: 640,
            total_steps: 2_000_000,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            normalize_advantages: true,
            seed: 0,
            train_scenes: 50,
            eval_interval: 50,
            eval_episodes: 100,
            network: None,
        }
    }
}

impl TrainConfig {
    pub fn for_controller(task: TaskKind, controller: ControllerKind) -> Self {
        Self { task, controller, ..Self::default() }
    }

    pub fn network_config(&self) -> NetworkConfig {
        self.network
            .clone()
            .unwrap_or_else(|| NetworkConfig::standard(self.controller.policy_action_dim()))
    }

    pub fn horizon(&self) -> usize {
        self.samples_per_iteration / self.parallel_envs.max(1)
    }

    pub fn iterations(&self) -> u64 {
        self.total_steps.div_ceil(self.samples_per_iteration.max(1) as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.parallel_envs == 0 || self.samples_per_iteration % self.parallel_envs != 0 {
            return bad(format!(
                "samples_per_iteration ({}) must be a multiple of parallel_envs ({})",
                self.samples_per_iteration, self.parallel_envs
            ));
        }
        if self.horizon() == 0 {
            return bad("rollout horizon is zero".into());
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("clip", self.clip),
            ("max_grad_norm", self.max_grad_norm),
            ("adam_eps", self.adam_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("lr_policy", self.lr_policy),
            ("lr_value", self.lr_value),
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return bad("gamma and gae_lambda must not exceed 1".into());
        }
        if self.epochs == 0 || self.minibatches == 0 || self.parallel_envs % self.minibatches != 0 {
            return bad("epochs and minibatches must be positive and minibatches must divide parallel_envs".into());
        }
        if self.train_scenes == 0 || self.eval_episodes == 0 {
            return bad("train_scenes and eval_episodes must be positive".into());
        }
        if !self.controller.is_learned() {
            return bad(format!("controller {} is not trainable", self.controller));
        }
        let network = self.network_config();
        if network.action_dim != self.controller.policy_action_dim() || network.obs_dim != OBS_DIM {
            return bad(format!(
                "network {} does not fit controller {}",
                network.descriptor(),
                self.controller
            ));
        }
        Ok(())
    }
}

/// Training scene seeds that generate successfully, `count` of them.
pub fn training_scenes(task: TaskKind, count: usize) -> Vec<u64> {
    usable_seeds(task, 0, count).into_iter().map(|(s, _)| s).collect()
}

/// Held-out `(scene, spawn)` pairs, disjoint from training scenes.
pub fn held_out_seeds(task: TaskKind, count: usize) -> Vec<(u64, u64)> {
    usable_seeds(task, HELD_OUT_SCENE_BASE, count)
}

/// First `count` seeds from `base` whose scene and spawn both generate.
pub fn usable_seeds(task: TaskKind, base: u64, count: usize) -> Vec<(u64, u64)> {
    (base..)
        .map(|s| (s, splitmix64(s)))
        .filter(|(scene, spawn)| Env::reset(task, *scene, *spawn).is_ok())
        .take(count)
        .collect()
}

/// Fixed-shape rollout storage, `[T, B, ..]`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub obs: Array3<f64>,
    /// Raw policy outputs (before gating and clamping).
    pub actions: Array3<f64>,
    pub log_probs: Array2<f64>,
    pub values: Array2<f64>,
    pub rewards: Array2<f64>,
    /// The step ended its episode.
    pub dones: Array2<bool>,
    /// The step began a new episode (recurrent state reset before it).
    pub starts: Array2<bool>,
    /// Recurrent state entering step 0.
    pub h0: Array2<f64>,
    /// Value estimate of the observation following the last step.
    pub bootstrap: Array1<f64>,
}

impl RolloutBuffer {
    pub fn new(steps: usize, envs: usize, obs_dim: usize, action_dim: usize, hidden: usize) -> Self {
        Self {
            obs: Array3::zeros((steps, envs, obs_dim)),
            actions: Array3::zeros((steps, envs, action_dim)),
            log_probs: Array2::zeros((steps, envs)),
            values: Array2::zeros((steps, envs)),
            rewards: Array2::zeros((steps, envs)),
            dones: Array2::from_elem((steps, envs), false),
            starts: Array2::from_elem((steps, envs), false),
            h0: Array2::zeros((envs, hidden)),
            bootstrap: Array1::zeros(envs),
        }
    }

    pub fn steps(&self) -> usize {
        self.rewards.nrows()
    }

    pub fn envs(&self) -> usize {
        self.rewards.ncols()
    }

    /// Columns `range` as an independent buffer.
    pub fn select_envs(&self, range: std::ops::Range<usize>) -> RolloutBuffer {
        RolloutBuffer {
            obs: self.obs.slice(s![.., range.clone(), ..]).to_owned(),
            actions: self.actions.slice(s![.., range.clone(), ..]).to_owned(),
            log_probs: self.log_probs.slice(s![.., range.clone()]).to_owned(),
            values: self.values.slice(s![.., range.clone()]).to_owned(),
            rewards: self.rewards.slice(s![.., range.clone()]).to_owned(),
            dones: self.dones.slice(s![.., range.clone()]).to_owned(),
            starts: self.starts.slice(s![.., range.clone()]).to_owned(),
            h0: self.h0.slice(s![range.clone(), ..]).to_owned(),
            bootstrap: self.bootstrap.slice(s![range]).to_owned(),
        }
    }
}

/// `δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t`,
/// `A_t = δ_t + γ λ (1 - done_t) A_{t+1}`, returns `A + V`.
pub fn compute_gae(
    rewards: &Array2<f64>,
    values: &Array2<f64>,
    dones: &Array2<bool>,
    bootstrap: &Array1<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (t_len, b) = rewards.dim();
    if values.dim() != (t_len, b) || dones.dim() != (t_len, b) || bootstrap.len() != b {
        return Err(Error::Shape(format!(
            "rewards {:?}, values {:?}, dones {:?}, bootstrap {}",
            rewards.dim(),
            values.dim(),
            dones.dim(),
            bootstrap.len()
        )));
    }
    let mut adv = Array2::zeros((t_len, b));
    for j in 0..b {
        let mut next_adv = 0.0;
        for t in (0..t_len).rev() {
            let next_value = if t + 1 == t_len { bootstrap[j] } else { values[[t + 1, j]] };
            let live = if dones[[t, j]] { 0.0 } else { 1.0 };
            let delta = rewards[[t, j]] + gamma * next_value * live - values[[t, j]];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[[t, j]] = next_adv;
        }
    }
    let returns = &adv + values;
    Ok((adv, returns))
}

/// Zero mean, unit (population) variance.
pub fn normalize_advantages(adv: &mut Array2<f64>) {
    let n = adv.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = adv.sum() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.mapv_inplace(|a| (a - mean) / std);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Clipped-surrogate loss over a (mini)batch and its gradient:
/// `-mean(min(ρA, clip(ρ)A)) + c_v·mean((V - R)^2) - c_e·mean(H)`.
pub fn ppo_loss_and_grad(
    network: &Network,
    params: &PolicyParams,
    batch: &RolloutBuffer,
    advantages: &Array2<f64>,
    returns: &Array2<f64>,
    config: &TrainConfig,
) -> Result<(UpdateStats, Vec<f64>)> {
    let cache = network.forward_sequence(params, &batch.obs, &batch.starts, &batch.h0)?;
    let (t_len, b) = (batch.steps(), batch.envs());
    let a_dim = network.config.action_dim;
    let n = (t_len * b) as f64;
    let log_std = &cache.log_std;
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut d_mean = Array3::zeros((t_len, b, a_dim));
    let mut d_value = Array2::zeros((t_len, b));
    let mut d_log_std = vec![-config.entropy_coef; a_dim];
    let mut stats = UpdateStats::default();
    let (lo, hi) = (1.0 - config.clip, 1.0 + config.clip);
    let mut mean_row = vec![0.0; a_dim];
    let mut act_row = vec![0.0; a_dim];
    for t in 0..t_len {
        for j in 0..b {
            for k in 0..a_dim {
                mean_row[k] = cache.mean[[t, j, k]];
                act_row[k] = batch.actions[[t, j, k]];
            }
            let logp = gaussian_log_prob(&act_row, &mean_row, log_std);
            let log_ratio = logp - batch.log_probs[[t, j]];
            let ratio = log_ratio.exp();
            let adv = advantages[[t, j]];
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(lo, hi) * adv;
            stats.policy_loss -= unclipped.min(clipped) / n;
            if !(lo..=hi).contains(&ratio) {
                stats.clip_fraction += 1.0 / n;
            }
            stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;
            // Gradient flows only through the unclipped branch when it is the
            // active minimum.
            let d_logp = if unclipped <= clipped { -adv * ratio / n } else { 0.0 };
            if d_logp != 0.0 {
                for k in 0..a_dim {
                    let diff = act_row[k] - mean_row[k];
                    d_mean[[t, j, k]] = d_logp * diff * inv_var[k];
                    d_log_std[k] += d_logp * (diff * diff * inv_var[k] - 1.0);
                }
            }
            let v_err = cache.value[[t, j]] - returns[[t, j]];
            stats.value_loss += v_err * v_err / n;
            d_value[[t, j]] = config.value_coef * 2.0 * v_err / n;
        }
    }
    stats.entropy = gaussian_entropy(log_std);
    stats.loss = stats.policy_loss + config.value_coef * stats.value_loss - config.entropy_coef * stats.entropy;
    let grad = network.backward_sequence(params, &cache, &d_mean, &d_value, &d_log_std);
    Ok((stats, grad))
}

/// One Adam step with a separate learning rate for the value head. Returns
/// the gradient norm before clipping.
pub fn adam_step(
    network: &Network,
    params: &mut PolicyParams,
    adam: &mut AdamState,
    grad: &mut [f64],
    config: &TrainConfig,
) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > config.max_grad_norm {
        let k = config.max_grad_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    adam.step += 1;
    let t = adam.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let value_range = network.value_head_range();
    for (i, g) in grad.iter().enumerate() {
        adam.m[i] = ADAM_BETA1 * adam.m[i] + (1.0 - ADAM_BETA1) * g;
        adam.v[i] = ADAM_BETA2 * adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let lr = if value_range.contains(&i) { config.lr_value } else { config.lr_policy };
        let step = (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + config.adam_eps);
        params.values[i] -= lr * step;
    }
    network.clamp_params(params);
    norm
}

/// Runs the configured epochs over a full buffer.
pub fn ppo_update(
    network: &Network,
    params: &mut PolicyParams,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    config: &TrainConfig,
) -> Result<UpdateStats> {
    let (mut adv, returns) = compute_gae(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        &buffer.bootstrap,
        config.gamma,
        config.gae_lambda,
    )?;
    if config.normalize_advantages {
        normalize_advantages(&mut adv);
    }
    let b = buffer.envs();
    let per = b / config.minibatches;
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..config.epochs {
        for m in 0..config.minibatches {
            let range = m * per..(m + 1) * per;
            let mb = buffer.select_envs(range.clone());
            let a = adv.slice(s![.., range.clone()]).to_owned();
            let r = returns.slice(s![.., range]).to_owned();
            let (stats, mut grad) = ppo_loss_and_grad(network, params, &mb, &a, &r, config)?;
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss {} (policy {}, value {}, entropy {})",
                    stats.loss, stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            let norm = adam_step(network, params, adam, &mut grad, config);
            total.loss += stats.loss;
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.clip_fraction += stats.clip_fraction;
            total.approx_kl += stats.approx_kl;
            total.grad_norm += norm;
            count += 1.0;
        }
    }
    for v in [
        &mut total.loss,
        &mut total.policy_loss,
        &mut total.value_loss,
        &mut total.entropy,
        &mut total.clip_fraction,
        &mut total.approx_kl,
        &mut total.grad_norm,
    ] {
        *v /= count;
    }
    Ok(total)
}

/// Episode-level results from one collection phase.
#[derive(Debug, Clone, Default)]
pub struct CollectStats {
    pub episodes: Vec<EpisodeSummary>,
}

/// Recurrent rollout collector owning the training environments.
pub struct Collector {
    pub venv: VecEnv,
    hidden: Array2<f64>,
    latches: Vec<StageLatch>,
    gating: Gating,
}

impl Collector {
    pub fn new(venv: VecEnv, hidden: usize, gating: Gating) -> Self {
        let n = venv.len();
        Self {
            venv,
            hidden: Array2::zeros((n, hidden)),
            latches: vec![StageLatch::default(); n],
            gating,
        }
    }

    pub fn collect(
        &mut self,
        network: &Network,
        params: &PolicyParams,
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(RolloutBuffer, CollectStats)> {
        let n = self.venv.len();
        let a_dim = network.config.action_dim;
        let mut buf = RolloutBuffer::new(horizon, n, OBS_DIM, a_dim, network.config.hidden);
        let mut stats = CollectStats::default();
        for t in 0..horizon {
            for i in 0..n {
                if self.venv.starts[i] {
                    self.hidden.row_mut(i).fill(0.0);
                    self.latches[i] = StageLatch::default();
                }
            }
            if t == 0 {
                buf.h0.assign(&self.hidden);
            }
            let x = Array2::from_shape_fn((n, OBS_DIM), |(i, j)| self.venv.obs[i].0[j]);
            let out = network.forward(params, &x, &self.hidden)?;
            let mut env_actions = Vec::with_capacity(n);
            for i in 0..n {
                let mean = out.mean.row(i).to_vec();
                let sample = sample_action(&mean, &out.log_std, rng);
                let reached = self.venv.envs[i]
                    .as_ref()
                    .is_some_and(|e| e.base_distance() <= e.weights.d_reach);
                env_actions.push(self.latches[i].gate(self.gating, &sample.action, reached));
                buf.obs.slice_mut(s![t, i, ..]).assign(&x.row(i));
                for (k, a) in sample.action.iter().enumerate() {
                    buf.actions[[t, i, k]] = *a;
                }
                buf.log_probs[[t, i]] = sample.log_prob;
                buf.values[[t, i]] = out.value[i];
                buf.starts[[t, i]] = self.venv.starts[i];
            }
            self.hidden = out.hidden;
            let stepped = self.venv.step(&env_actions)?;
            for (i, st) in stepped.into_iter().enumerate() {
                let r = st
                    .result
                    .ok_or_else(|| Error::Env { index: i, source: Box::new(Error::Usage("idle training environment".into())) })?;
                buf.rewards[[t, i]] = r.reward.total;
                buf.dones[[t, i]] = r.terminated || r.truncated;
                if let Some(log) = st.finished {
                    stats.episodes.push(crate::env::summarize(&log));
                }
            }
        }
        // Bootstrap from the state after the last step.
        let mut h = self.hidden.clone();
        for i in 0..n {
            if self.venv.starts[i] {
                h.row_mut(i).fill(0.0);
            }
        }
        let x = Array2::from_shape_fn((n, OBS_DIM), |(i, j)| self.venv.obs[i].0[j]);
        buf.bootstrap = network.forward(params, &x, &h)?.value;
        Ok((buf, stats))
    }
}

/// Mean-action evaluation of a learned policy on `(scene, spawn)` seeds.
/// Output order follows `seeds`.
pub fn evaluate_learned(
    network: &Network,
    params: &PolicyParams,
    kind: ControllerKind,
    task: TaskKind,
    seeds: &[(u64, u64)],
    parallel: usize,
) -> Result<Vec<EpisodeSummary>> {
    let mut venv = VecEnv::new(task, parallel.clamp(1, seeds.len().max(1)), SeedSource::list(seeds.iter().copied()))?;
    let mut policy = LearnedController::new(network.clone(), params.clone(), Gating::for_kind(kind));
    let rollouts = run_vectorized(&mut venv, &mut policy, None)?;
    let mut out: Vec<EpisodeSummary> = rollouts.episodes.iter().map(crate::env::summarize).collect();
    let order = |s: &EpisodeSummary| seeds.iter().position(|p| *p == (s.scene_seed, s.spawn_seed));
    out.sort_by_key(order);
    Ok(out)
}

/// One line of the learning-curve log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean return of training episodes finished during the iteration.
    pub mean_return: Option<f64>,
    pub train_success: Option<f64>,
    pub eval_success: Option<f64>,
    pub eval_progress: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRecord>,
}

/// Collect → advantages → update, until `total_steps`. Resuming continues
/// the iteration and step counters and the optimizer state; environments
/// restart with fresh episodes.
pub fn train(
    config: &TrainConfig,
    resume: Option<Checkpoint>,
    on_record: &mut dyn FnMut(&CurveRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let network = Network::new(config.network_config())?;
    let (mut params, mut adam, start_iter, mut env_steps) = match resume {
        Some(ck) => {
            ck.check_compatible(&network)?;
            if ck.controller != config.controller {
                return Err(Error::Checkpoint(format!(
                    "checkpoint trained {} but config requests {}",
                    ck.controller, config.controller
                )));
            }
            let adam = ck.adam.unwrap_or_else(|| AdamState::new(network.param_count()));
            (ck.params, adam, ck.iteration, ck.env_steps)
        }
        None => {
            let mut init_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed));
            let p = network.init(&mut init_rng);
            (p, AdamState::new(network.param_count()), 0, 0)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0xA5A5) ^ start_iter);
    let scenes = training_scenes(config.task, config.train_scenes);
    let stream = SeedSource::stream_over_scenes(splitmix64(config.seed).wrapping_add(start_iter), scenes);
    let venv = VecEnv::new(config.task, config.parallel_envs, stream)?;
    let mut collector = Collector::new(venv, network.config.hidden, Gating::for_kind(config.controller));
    let eval_seeds = held_out_seeds(config.task, config.eval_episodes);
    let horizon = config.horizon();
    let iterations = config.iterations();
    let mut curve = Vec::new();
    for it in start_iter..iterations {
        let (buffer, collected) = collector.collect(&network, &params, horizon, &mut rng)?;
        let stats = ppo_update(&network, &mut params, &mut adam, &buffer, config)?;
        env_steps += (horizon * config.parallel_envs) as u64;
        let iteration = it + 1;
        let eps = &collected.episodes;
        let mean_of = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            (!eps.is_empty()).then(|| eps.iter().map(f).sum::<f64>() / eps.len() as f64)
        };
        let eval_due = iteration == iterations
            || (config.eval_interval > 0 && iteration % config.eval_interval == 0);
        let (eval_success, eval_progress) = if eval_due {
            let res = evaluate_learned(&network, &params, config.controller, config.task, &eval_seeds, config.parallel_envs)?;
            let n = res.len().max(1) as f64;
            (
                Some(res.iter().filter(|s| s.success).count() as f64 / n),
                Some(res.iter().map(|s| s.progress).sum::<f64>() / n),
            )
        } else {
            (None, None)
        };
        let record = CurveRecord {
            iteration,
            env_steps,
            mean_return: mean_of(&|s| s.return_total),
            train_success: mean_of(&|s| if s.success { 1.0 } else { 0.0 }),
            eval_success,
            eval_progress,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            grad_norm: stats.grad_norm,
        };
        on_record(&record)?;
        curve.push(record);
    }
    let checkpoint = Checkpoint {
        descriptor: network.config.descriptor(),
        controller: config.controller,
        iteration: iterations.max(start_iter),
        env_steps,
        params,
        adam: Some(adam),
    };
    Ok(TrainOutcome { checkpoint, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::RAW_ACTION_DIM;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn terminal_step_does_not_bootstrap() {
        let r = Array2::from_elem((1, 1), 2.0);
        let v = Array2::from_elem((1, 1), 0.5);
        let d = Array2::from_elem((1, 1), true);
        let (a, ret) = compute_gae(&r, &v, &d, &Array1::from_elem(1, 100.0), 0.99, 0.95).unwrap();
        assert_abs_diff_eq!(a[[0, 0]], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ret[[0, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn geometric_series_fixture() {
        let n = 10;
        let (g, l) = (0.99, 0.95);
        let r = Array2::from_elem((n, 1), 1.0);
        let v = Array2::zeros((n, 1));
        let d = Array2::from_elem((n, 1), false);
        let (a, _) = compute_gae(&r, &v, &d, &Array1::zeros(1), g, l).unwrap();
        for t in 0..n {
            let want: f64 = (0..n - t).map(|k| (g * l as f64).powi(k as i32)).sum();
            assert_abs_diff_eq!(a[[t, 0]], want, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_discount_is_one_step_error() {
        let r = Array2::from_shape_fn((4, 2), |(t, j)| (t + j) as f64);
        let v = Array2::from_shape_fn((4, 2), |(t, j)| 0.5 * (t * j) as f64);
        let d = Array2::from_elem((4, 2), false);
        let (a, _) = compute_gae(&r, &v, &d, &Array1::from_elem(2, 9.0), 0.0, 0.95).unwrap();
        assert_eq!(a, &r - &v);
    }

    #[test]
    fn unit_lambda_and_gamma_give_reward_to_go() {
        let r = Array2::from_shape_fn((6, 1), |(t, _)| t as f64 - 2.0);
        let v = Array2::zeros((6, 1));
        let mut d = Array2::from_elem((6, 1), false);
        d[[2, 0]] = true;
        let (a, _) = compute_gae(&r, &v, &d, &Array1::zeros(1), 1.0, 1.0).unwrap();
        let want = [-3.0, -1.0, 0.0, 6.0, 5.0, 3.0];
        for t in 0..6 {
            assert_abs_diff_eq!(a[[t, 0]], want[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn gae_rejects_misaligned_shapes() {
        let r = Array2::zeros((3, 2));
        let v = Array2::zeros((3, 1));
        let d = Array2::from_elem((3, 2), false);
        assert!(matches!(compute_gae(&r, &v, &d, &Array1::zeros(2), 0.9, 0.9), Err(Error::Shape(_))));
    }

    #[test]
    fn normalized_advantages_have_unit_moments() {
        let mut a = Array2::from_shape_fn((32, 20), |(t, j)| ((t * 31 + j * 7) as f64).sin() * 3.0 + 1.0);
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn iteration_count_for_default_budget() {
        let c = TrainConfig::default();
        assert_eq!(c.horizon(), 32);
        assert_eq!(c.iterations(), 3125);
        c.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig { samples_per_iteration: 650, ..Default::default() };
        assert!(c.validate().is_err());
        c.samples_per_iteration = 640;
        c.clip = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            controller: ControllerKind::LearnedModeGated,
            network: Some(NetworkConfig::standard(RAW_ACTION_DIM)),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        TrainConfig::for_controller(TaskKind::DoorPush, ControllerKind::LearnedModeGated)
            .validate()
            .unwrap();
    }

    fn tiny_network() -> Network {
        Network::new(NetworkConfig { obs_dim: 2, encoder: vec![], hidden: 2, action_dim: 2 }).unwrap()
    }

    /// Buffer whose stored log-probs sit near the current policy's, so
    /// ratios stay strictly inside the clip range.
    fn tiny_batch(net: &Network, params: &PolicyParams) -> (RolloutBuffer, Array2<f64>, Array2<f64>) {
        let (t_len, b) = (5, 2);
        let mut buf = RolloutBuffer::new(t_len, b, 2, 2, 2);
        buf.obs = Array3::from_shape_fn((t_len, b, 2), |(t, i, j)| ((t * 3 + i * 5 + j) as f64 * 0.9).sin());
        buf.actions = Array3::from_shape_fn((t_len, b, 2), |(t, i, j)| ((t + i * 2 + j * 3) as f64 * 1.3).cos());
        buf.starts[[0, 0]] = true;
        buf.starts[[0, 1]] = true;
        buf.starts[[3, 1]] = true;
        let cache = net.forward_sequence(params, &buf.obs, &buf.starts, &buf.h0).unwrap();
        for t in 0..t_len {
            for i in 0..b {
                let mean: Vec<f64> = (0..2).map(|k| cache.mean[[t, i, k]]).collect();
                let act: Vec<f64> = (0..2).map(|k| buf.actions[[t, i, k]]).collect();
                let offset = 0.04 * ((t * 2 + i) as f64 * 1.7).sin();
                buf.log_probs[[t, i]] = gaussian_log_prob(&act, &mean, &cache.log_std) + offset;
            }
        }
        let adv = Array2::from_shape_fn((t_len, b), |(t, i)| ((t * 7 + i) as f64 * 0.6).sin());
        let ret = Array2::from_shape_fn((t_len, b), |(t, i)| ((t + 3 * i) as f64 * 0.4).cos());
        (buf, adv, ret)
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = tiny_network();
        assert!(net.param_count() <= 50);
        let mut p = net.init(&mut ChaCha8Rng::seed_from_u64(5));
        for v in p.values.iter_mut() {
            *v = *v * 1.5 + 0.03;
        }
        let (buf, adv, ret) = tiny_batch(&net, &p);
        let cfg = TrainConfig::default();
        let (_, grad) = ppo_loss_and_grad(&net, &p, &buf, &adv, &ret, &cfg).unwrap();
        let eps = 1e-6;
        for i in 0..p.values.len() {
            let mut plus = p.clone();
            plus.values[i] += eps;
            let mut minus = p.clone();
            minus.values[i] -= eps;
            let lp = ppo_loss_and_grad(&net, &plus, &buf, &adv, &ret, &cfg).unwrap().0.loss;
            let lm = ppo_loss_and_grad(&net, &minus, &buf, &adv, &ret, &cfg).unwrap().0.loss;
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "param {i}: analytic {} vs numeric {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn unit_ratio_with_centred_advantages_has_zero_policy_loss() {
        let net = tiny_network();
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(6));
        let (mut buf, mut adv, ret) = tiny_batch(&net, &p);
        let cache = net.forward_sequence(&p, &buf.obs, &buf.starts, &buf.h0).unwrap();
        for t in 0..buf.steps() {
            for i in 0..buf.envs() {
                let mean: Vec<f64> = (0..2).map(|k| cache.mean[[t, i, k]]).collect();
                let act: Vec<f64> = (0..2).map(|k| buf.actions[[t, i, k]]).collect();
                buf.log_probs[[t, i]] = gaussian_log_prob(&act, &mean, &cache.log_std);
            }
        }
        normalize_advantages(&mut adv);
        let (stats, _) = ppo_loss_and_grad(&net, &p, &buf, &adv, &ret, &TrainConfig::default()).unwrap();
        assert!(stats.policy_loss.abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_params_bitwise_unchanged() {
        let net = tiny_network();
        let p0 = net.init(&mut ChaCha8Rng::seed_from_u64(7));
        let (buf, _, _) = tiny_batch(&net, &p0);
        let cfg = TrainConfig { lr_policy: 0.0, lr_value: 0.0, ..Default::default() };
        let mut p = p0.clone();
        let mut adam = AdamState::new(net.param_count());
        ppo_update(&net, &mut p, &mut adam, &buf, &cfg).unwrap();
        assert!(p.values.iter().zip(&p0.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(adam.step, cfg.epochs as u64);
    }

    #[test]
    fn nonfinite_loss_is_reported() {
        let net = tiny_network();
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(8));
        let (mut buf, _, _) = tiny_batch(&net, &p);
        buf.rewards[[1, 0]] = f64::NAN;
        let mut q = p.clone();
        let err = ppo_update(&net, &mut q, &mut AdamState::new(net.param_count()), &buf, &TrainConfig::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    fn smoke_config() -> TrainConfig {
        TrainConfig {
            parallel_envs: 2,
            samples_per_iteration: 16,
            total_steps: 48,
            train_scenes: 2,
            eval_interval: 0,
            eval_episodes: 2,
            seed: 3,
            network: Some(NetworkConfig { obs_dim: OBS_DIM, encoder: vec![8], hidden: 4, action_dim: RAW_ACTION_DIM }),
            ..Default::default()
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = smoke_config();
        let a = train(&cfg, None, &mut |_| Ok(())).unwrap();
        let b = train(&cfg, None, &mut |_| Ok(())).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.curve.len(), 3);
        assert_eq!(a.checkpoint.env_steps, 48);
        assert!(a.curve.last().unwrap().eval_success.is_some());
        assert!(a.checkpoint.params.is_finite());
    }

    #[test]
    fn resume_continues_counters() {
        let cfg = smoke_config();
        let first = train(&TrainConfig { total_steps: 16, ..cfg.clone() }, None, &mut |_| Ok(())).unwrap();
        assert_eq!(first.checkpoint.iteration, 1);
        let rest = train(&cfg, Some(first.checkpoint), &mut |_| Ok(())).unwrap();
        assert_eq!(rest.curve.first().unwrap().iteration, 2);
        assert_eq!(rest.checkpoint.iteration, 3);
        assert_eq!(rest.checkpoint.env_steps, 48);
        assert_eq!(rest.checkpoint.adam.as_ref().unwrap().step, 3 * cfg.epochs as u64);
    }

    #[test]
    fn clipped_branch_uses_clipped_ratio() {
        // ratio 1.2 with positive advantage: the objective is 1.1·A.
        let (ratio, adv, clip): (f64, f64, f64) = (1.2, 2.0, 0.1);
        let obj = (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv);
        assert_abs_diff_eq!(obj, 1.1 * adv, epsilon = 1e-12);
    }
}
