//! Compares the scripted oracle with the scripted two-stage baseline, which
//! freezes its base once it reaches the target.
//!
//! `cargo run --release --example two_stage_baseline -- [episodes]`

use mmbench::agents::ControllerKind;
use mmbench::env::{summarize, TaskKind};
use mmbench::harness::{make_policy, run_episodes};
use mmbench::ppo::usable_seeds;
use mmbench::scene::SpawnBand;

fn main() -> mmbench::Result<()> {
    let episodes: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    println!("{:<12} {:<20} {:>9} {:>9}", "task", "controller", "success", "progress");
    for task in TaskKind::ALL {
        let seeds = usable_seeds(task, 1_000_000, episodes);
        for kind in [ControllerKind::ScriptedOracle, ControllerKind::ScriptedTwoStage] {
            let mut policy = make_policy(kind, None)?;
            let logs = run_episodes(task, SpawnBand::for_task(task), &seeds, policy.as_mut(), 20, 500)?;
            let n = logs.len() as f64;
            let wins = logs.iter().filter(|l| summarize(l).success).count() as f64;
            let progress = logs.iter().map(|l| summarize(l).progress).sum::<f64>() / n;
            println!("{:<12} {:<20} {:>8.1}% {:>8.1}%", task.name(), kind.name(), 100.0 * wins / n, 100.0 * progress);
        }
    }
    Ok(())
}
