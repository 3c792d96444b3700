//! Opens a pull door and a fridge with the scripted oracle and traces the
//! hinge angle, the grasp and the controller phase.
//!
//! `cargo run --release --example door_interaction -- [scene seed]`

use mmbench::agents::ScriptedPlanner;
use mmbench::env::{Env, TaskKind};

fn main() -> mmbench::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    for task in [TaskKind::DoorPush, TaskKind::DoorPull, TaskKind::OpenFridge] {
        let (mut env, _) = Env::reset(task, seed, seed + 1)?;
        let theta_max = env.door.expect("door task").spec.theta_max;
        let mut ctl = ScriptedPlanner::oracle();
        println!("{task} (theta max {theta_max:.3} rad)");
        let mut last_phase = String::new();
        loop {
            let a = ctl.act(&env)?;
            let r = env.step(&a)?;
            let phase = format!("{:?}", ctl.status());
            if phase != last_phase || r.terminated || r.truncated || env.steps % 40 == 0 {
                println!(
                    "  step {:>3}  theta {:.3}  open {:>5.1}%  holding {:<5}  base dist {:.2}  {phase}",
                    env.steps,
                    env.door_theta(),
                    100.0 * r.info.progress,
                    r.info.holding,
                    env.base_distance()
                );
                last_phase = phase;
            }
            if r.terminated || r.truncated {
                println!("  success {}", env.summary().success);
                break;
            }
        }
    }
    Ok(())
}
