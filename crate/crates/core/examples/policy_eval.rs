//! Loads a trained checkpoint and compares mean-action and sampled-action
//! success on training scenes and on held-out scenes.
//!
//! `cargo run --release --example policy_eval -- <checkpoint> [task] [episodes]`

use mmbench::agents::checkpoint::Checkpoint;
use mmbench::agents::{Gating, LearnedController};
use mmbench::env::{summarize, BatchPolicy, TaskKind};
use mmbench::harness::run_episodes;
use mmbench::ppo::{held_out_seeds, training_scenes};
use mmbench::scene::SpawnBand;
use mmbench::env::splitmix64;
use std::path::PathBuf;

fn main() -> mmbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let path: PathBuf = args
        .next()
        .ok_or_else(|| mmbench::Error::Config("usage: policy_eval <checkpoint> [task] [episodes]".into()))?
        .into();
    let task: TaskKind = args.next().map(|a| a.parse()).transpose()?.unwrap_or(TaskKind::DoorPush);
    let episodes: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);

    let ck = Checkpoint::load(&path)?;
    let network = ck.network()?;
    let gating = Gating::for_kind(ck.controller);
    let train: Vec<(u64, u64)> = training_scenes(task, 50)
        .into_iter()
        .cycle()
        .take(episodes)
        .enumerate()
        .map(|(i, s)| (s, splitmix64(0xE7A1 + i as u64)))
        .collect();
    let held_out = held_out_seeds(task, episodes);

    for (label, seeds) in [("training scenes", &train), ("held-out scenes", &held_out)] {
        for sampled in [false, true] {
            let mut policy: Box<dyn BatchPolicy> = {
                let c = LearnedController::new(network.clone(), ck.params.clone(), gating);
                Box::new(if sampled { c.stochastic(7) } else { c })
            };
            let logs = run_episodes(task, SpawnBand::for_task(task), seeds, policy.as_mut(), 20, 500)?;
            let n = logs.len() as f64;
            let summaries: Vec<_> = logs.iter().map(summarize).collect();
            let wins = summaries.iter().filter(|s| s.success).count() as f64;
            let progress: f64 = summaries.iter().map(|s| s.progress).sum::<f64>() / n;
            println!(
                "{label:<16} {:<8} success {:.3} progress {:.3}",
                if sampled { "sampled" } else { "mean" },
                wins / n,
                progress
            );
        }
    }
    Ok(())
}
