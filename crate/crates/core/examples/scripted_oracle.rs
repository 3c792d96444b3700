//! Runs the scripted oracle on a range of seeds and prints per-task success.
//!
//! `cargo run --release --example scripted_oracle -- [episodes] [task]`

use mmbench::agents::ScriptedPlanner;
use mmbench::env::{Env, TaskKind};

fn main() -> mmbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let only: Option<TaskKind> = args.next().and_then(|a| a.parse().ok());
    for task in TaskKind::ALL.into_iter().filter(|t| only.is_none_or(|o| o == *t)) {
        let mut wins = 0;
        let mut progress = 0.0;
        let mut steps = 0;
        for seed in 0..episodes {
            let (mut env, _) = Env::reset(task, seed, seed + 1000)?;
            let mut ctl = ScriptedPlanner::oracle();
            loop {
                let a = ctl.act(&env)?;
                let r = env.step(&a)?;
                if r.terminated || r.truncated {
                    break;
                }
            }
            let s = env.summary();
            if std::env::var("VERBOSE").is_ok() {
                println!("  seed {seed}: success={} progress={:.3} len={} status={:?}", s.success, s.progress, s.episode_length, ctl.status());
            }
            wins += s.success as usize;
            progress += s.progress;
            steps += s.episode_length;
        }
        println!(
            "{task}: success {:.3}  progress {:.3}  mean length {:.1}",
            wins as f64 / episodes as f64,
            progress / episodes as f64,
            steps as f64 / episodes as f64
        );
    }
    Ok(())
}
