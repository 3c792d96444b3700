//! Controllers: scripted planners with privileged state, learned recurrent
//! policies, and the action-space restrictions used by the factored
//! baselines.

pub mod checkpoint;
pub mod oracle;
pub mod policy;

use crate::env::{BatchPolicy, Env, Observation};
use crate::error::{Error, Result};
use crate::kinematics::RAW_ACTION_DIM;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use oracle::{arm_ik, command_to_raw, ControllerStatus, ScriptedPlanner};
pub use policy::{sample_action, GaussianSample, Network, NetworkConfig, PolicyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    ScriptedOracle,
    ScriptedTwoStage,
    LearnedJoint,
    LearnedTwoStage,
    LearnedModeGated,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::ScriptedOracle,
        ControllerKind::ScriptedTwoStage,
        ControllerKind::LearnedJoint,
        ControllerKind::LearnedTwoStage,
        ControllerKind::LearnedModeGated,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::ScriptedOracle => "scripted_oracle",
            ControllerKind::ScriptedTwoStage => "scripted_two_stage",
            ControllerKind::LearnedJoint => "learned_joint",
            ControllerKind::LearnedTwoStage => "learned_two_stage",
            ControllerKind::LearnedModeGated => "learned_mode_gated",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(
            self,
            ControllerKind::LearnedJoint | ControllerKind::LearnedTwoStage | ControllerKind::LearnedModeGated
        )
    }

    /// Policy output width: the mode-gated policy carries an extra mode logit.
    pub fn policy_action_dim(&self) -> usize {
        match self {
            ControllerKind::LearnedModeGated => RAW_ACTION_DIM + 1,
            _ => RAW_ACTION_DIM,
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}'")))
    }
}

/// Which half of the action space is live on a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nav,
    Manip,
}

/// Zeroes the dimensions the mode does not control. Grasp always passes.
pub fn mode_gate(raw: &[f64; RAW_ACTION_DIM], mode: Mode) -> [f64; RAW_ACTION_DIM] {
    let mut out = *raw;
    match mode {
        Mode::Nav => out[2..5].fill(0.0),
        Mode::Manip => out[0..2].fill(0.0),
    }
    out
}

/// Per-environment controller driven one step at a time.
pub trait Controller {
    /// Called before the first step of every episode.
    fn reset(&mut self);
    fn act(&mut self, env: &Env, obs: &Observation) -> Result<[f64; RAW_ACTION_DIM]>;
}

impl Controller for ScriptedPlanner {
    fn reset(&mut self) {
        ScriptedPlanner::reset(self);
    }

    fn act(&mut self, env: &Env, _obs: &Observation) -> Result<[f64; RAW_ACTION_DIM]> {
        ScriptedPlanner::act(self, env)
    }
}

/// How a learned policy's raw output becomes an environment action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gating {
    /// Identity.
    Joint,
    /// Navigation until the base first comes within the reach radius, then
    /// manipulation for the rest of the episode.
    TwoStage,
    /// The sign of the extra output picks the mode every step.
    PerStep,
}

impl Gating {
    pub fn for_kind(kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::LearnedTwoStage => Gating::TwoStage,
            ControllerKind::LearnedModeGated => Gating::PerStep,
            _ => Gating::Joint,
        }
    }
}

/// Tracks the irreversible two-stage switch for one environment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageLatch {
    pub switched: bool,
}

impl StageLatch {
    /// Effective action for the current step; `reached` reports whether the
    /// base is within the reach radius now.
    pub fn gate(
        &mut self,
        gating: Gating,
        policy_out: &[f64],
        reached: bool,
    ) -> [f64; RAW_ACTION_DIM] {
        let mut raw = [0.0; RAW_ACTION_DIM];
        raw.copy_from_slice(&policy_out[..RAW_ACTION_DIM]);
        match gating {
            Gating::Joint => raw,
            Gating::TwoStage => {
                self.switched |= reached;
                mode_gate(&raw, if self.switched { Mode::Manip } else { Mode::Nav })
            }
            Gating::PerStep => {
                let mode = if policy_out[RAW_ACTION_DIM] >= 0.0 { Mode::Manip } else { Mode::Nav };
                mode_gate(&raw, mode)
            }
        }
    }
}

/// Learned policy acting on a batch of environments. Evaluation uses the
/// mean action; sampling can be enabled with a seed.
pub struct LearnedController {
    pub network: Network,
    pub params: PolicyParams,
    pub gating: Gating,
    hidden: Array2<f64>,
    latches: Vec<StageLatch>,
    rng: Option<ChaCha8Rng>,
}

impl LearnedController {
    pub fn new(network: Network, params: PolicyParams, gating: Gating) -> Self {
        Self {
            network,
            params,
            gating,
            hidden: Array2::zeros((0, 0)),
            latches: Vec::new(),
            rng: None,
        }
    }

    /// Samples from the policy instead of taking its mean.
    pub fn stochastic(mut self, seed: u64) -> Self {
        self.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        self
    }

    fn ensure(&mut self, n: usize) {
        if self.hidden.nrows() != n {
            self.hidden = Array2::zeros((n, self.network.config.hidden));
            self.latches = vec![StageLatch::default(); n];
        }
    }
}

impl BatchPolicy for LearnedController {
    fn act(
        &mut self,
        envs: &[Option<Env>],
        obs: &[Observation],
        starts: &[bool],
    ) -> Result<Vec<[f64; RAW_ACTION_DIM]>> {
        let n = envs.len();
        self.ensure(n);
        for (i, s) in starts.iter().enumerate() {
            if *s {
                self.hidden.row_mut(i).fill(0.0);
                self.latches[i] = StageLatch::default();
            }
        }
        let x = Array2::from_shape_fn((n, obs[0].0.len()), |(i, j)| obs[i].0[j]);
        let out = self.network.forward(&self.params, &x, &self.hidden)?;
        self.hidden = out.hidden;
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let mean = out.mean.row(i).to_vec();
            let raw = match self.rng.as_mut() {
                Some(rng) => sample_action(&mean, &out.log_std, rng).action,
                None => mean,
            };
            let reached = envs[i]
                .as_ref()
                .is_some_and(|e| e.base_distance() <= e.weights.d_reach);
            actions.push(self.latches[i].gate(self.gating, &raw, reached));
        }
        Ok(actions)
    }
}

/// Runs one independent [`Controller`] per environment slot.
pub struct PerEnv<C> {
    factory: Box<dyn Fn() -> C + Send + Sync>,
    slots: Vec<C>,
}

impl<C: Controller> PerEnv<C> {
    pub fn new(factory: impl Fn() -> C + Send + Sync + 'static) -> Self {
        Self {
            factory: Box::new(factory),
            slots: Vec::new(),
        }
    }
}

impl<C: Controller> BatchPolicy for PerEnv<C> {
    fn act(
        &mut self,
        envs: &[Option<Env>],
        obs: &[Observation],
        starts: &[bool],
    ) -> Result<Vec<[f64; RAW_ACTION_DIM]>> {
        while self.slots.len() < envs.len() {
            self.slots.push((self.factory)());
        }
        let mut out = Vec::with_capacity(envs.len());
        for (i, env) in envs.iter().enumerate() {
            match env {
                Some(e) => {
                    if starts[i] {
                        self.slots[i].reset();
                    }
                    out.push(self.slots[i].act(e, &obs[i]).map_err(|err| err.in_env(i))?);
                }
                None => out.push([0.0; RAW_ACTION_DIM]),
            }
        }
        Ok(out)
    }
}
