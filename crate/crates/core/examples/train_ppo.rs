//! Trains a recurrent policy with PPO and prints the learning curve.
//!
//! `cargo run --release --example train_ppo -- [task] [controller] [env_steps] [seed]`

use mmbench::agents::ControllerKind;
use mmbench::env::TaskKind;
use mmbench::ppo::{train, TrainConfig};
use std::time::Instant;

fn main() -> mmbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let task: TaskKind = args.next().map(|a| a.parse()).transpose()?.unwrap_or(TaskKind::DoorPush);
    let controller: ControllerKind =
        args.next().map(|a| a.parse()).transpose()?.unwrap_or(ControllerKind::LearnedJoint);
    let steps: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(64_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let config = TrainConfig {
        total_steps: steps,
        seed,
        eval_interval: 25,
        eval_episodes: 50,
        ..TrainConfig::for_controller(task, controller)
    };
    let start = Instant::now();
    let outcome = train(&config, None, &mut |r| {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "iter {:5} steps {:8} return {:>8} train_success {:>6} eval_success {:>6} eval_progress {:>6} entropy {:.3} kl {:.5} [{:.0}s]",
            r.iteration,
            r.env_steps,
            fmt(r.mean_return),
            fmt(r.train_success),
            fmt(r.eval_success),
            fmt(r.eval_progress),
            r.entropy,
            r.approx_kl,
            start.elapsed().as_secs_f64()
        );
        Ok(())
    })?;
    println!(
        "done: {} iterations, {} env steps in {:.1}s",
        outcome.checkpoint.iteration,
        outcome.checkpoint.env_steps,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
