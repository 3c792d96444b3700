//! Steps twenty environments in lockstep under a random policy with
//! automatic resets and reports throughput.
//!
//! `cargo run --release --example vectorized_rollout -- [steps]`

use mmbench::env::{run_vectorized, BatchPolicy, Env, Observation, SeedSource, TaskKind, VecEnv};
use mmbench::kinematics::RAW_ACTION_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Uniform(ChaCha8Rng);

impl BatchPolicy for Uniform {
    fn act(&mut self, envs: &[Option<Env>], _: &[Observation], _: &[bool]) -> mmbench::Result<Vec<[f64; RAW_ACTION_DIM]>> {
        Ok(envs.iter().map(|_| std::array::from_fn(|_| self.0.gen_range(-1.0..1.0))).collect())
    }
}

fn main() -> mmbench::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let mut venv = VecEnv::new(TaskKind::DoorPush, 20, SeedSource::stream(42))?.with_max_steps(100);
    let mut policy = Uniform(ChaCha8Rng::seed_from_u64(1));
    let start = Instant::now();
    let out = run_vectorized(&mut venv, &mut policy, Some(steps))?;
    let secs = start.elapsed().as_secs_f64();
    let rewards: f64 = out.transitions.iter().flatten().flatten().map(|t| t.reward.total).sum();
    println!(
        "{} samples in {secs:.2} s ({:.0} steps/s), {} episodes finished, mean reward per step {:.4}",
        out.samples,
        out.samples as f64 / secs,
        out.episodes.len(),
        rewards / out.samples as f64
    );
    Ok(())
}
