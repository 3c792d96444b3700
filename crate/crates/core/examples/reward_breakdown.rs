//! Prints the shaped reward components of an oracle episode and checks that
//! the navigation and progress terms telescope.
//!
//! `cargo run --release --example reward_breakdown -- [task]`

use mmbench::agents::ScriptedPlanner;
use mmbench::env::{Env, TaskKind};

fn main() -> mmbench::Result<()> {
    let task: TaskKind = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(TaskKind::CleanTable);
    let (mut env, _) = Env::reset(task, 1_000_000, 9)?;
    let d_init = env.base_distance();
    let mut ctl = ScriptedPlanner::oracle();
    println!("{:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "step", "nav", "reach", "manip", "progress", "bonus", "total");
    loop {
        let r = env.step(&ctl.act(&env)?)?;
        let b = r.reward;
        let bonus = b.finish_bonus + b.grasp_bonus;
        if b.reach_bonus != 0.0 || bonus != 0.0 || env.steps % 20 == 1 || r.terminated || r.truncated {
            println!(
                "{:>4} {:>8.4} {:>8.1} {:>8.4} {:>8.4} {:>8.1} {:>8.4}",
                env.steps, b.nav_shaping, b.reach_bonus, b.manip_shaping, b.progress_term, bonus, b.total
            );
        }
        if r.terminated || r.truncated {
            break;
        }
    }
    let log = env.log();
    let nav: f64 = log.steps.iter().map(|s| s.reward.nav_shaping).sum();
    let progress: f64 = log.steps.iter().map(|s| s.reward.progress_term).sum();
    let rs = env.reward_state;
    println!(
        "nav shaping sum {nav:.6} = {:.1}·({d_init:.4} - {:.4})",
        env.weights.w_nav_shaping, rs.d_closest
    );
    println!("progress sum {progress:.6} = {:.0}·{:.4}", env.weights.w_progress, env.progress());
    println!("return {:.3}", env.summary().return_total);
    Ok(())
}
