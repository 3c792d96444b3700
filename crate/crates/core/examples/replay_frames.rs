//! Records an oracle episode, writes its log, and replays it into SVG frames.
//!
//! `cargo run --release --example replay_frames -- [out dir]`

use mmbench::agents::ScriptedPlanner;
use mmbench::env::{Env, TaskKind};
use mmbench::harness::replay::cmd_replay;
use std::path::PathBuf;

fn main() -> mmbench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "replay_out".into()).into();
    std::fs::create_dir_all(&out)?;
    let (mut env, _) = Env::reset(TaskKind::DoorPull, 1_000_002, 11)?;
    let mut ctl = ScriptedPlanner::oracle();
    loop {
        let r = env.step(&ctl.act(&env)?)?;
        if r.terminated || r.truncated {
            break;
        }
    }
    let log_path = out.join("episode.jsonl");
    std::fs::write(&log_path, env.log().to_jsonl())?;
    let report = cmd_replay(&log_path, &out.join("frames"), 10)?;
    println!(
        "{} steps, {} frames in {}, reward deviation {:e}, final angle {:.3}",
        report.steps,
        report.frames.len(),
        out.join("frames").display(),
        report.max_reward_error,
        report.final_door_theta.unwrap_or(0.0)
    );
    Ok(())
}
