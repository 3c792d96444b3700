//! Re-executes an episode log and renders top-down SVG frames.

use crate::env::{Env, EpisodeLog};
use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2};
use crate::kinematics::{end_effector_planar, gripper_tip_planar, LIMITS};
use crate::reward::RewardBreakdown;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

const PX_PER_M: f64 = 80.0;
const MARGIN_PX: f64 = 20.0;
/// Largest tolerated difference between logged and recomputed rewards.
pub const REWARD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub frames: Vec<PathBuf>,
    pub steps: usize,
    /// Largest absolute difference over every reward component.
    pub max_reward_error: f64,
    pub final_progress: f64,
    pub final_door_theta: Option<f64>,
}

fn components(r: &RewardBreakdown) -> [f64; 10] {
    [
        r.nav,
        r.manip,
        r.efficiency,
        r.total,
        r.nav_shaping,
        r.reach_bonus,
        r.manip_shaping,
        r.progress_term,
        r.finish_bonus,
        r.grasp_bonus,
    ]
}

/// Replays `log`, checking every recorded reward, and writes a frame at
/// step 0, every `every` steps, and after the last step. An empty log
/// writes nothing.
pub fn replay(log: Option<&EpisodeLog>, out_dir: &Path, every: usize) -> Result<ReplayReport> {
    let Some(log) = log else {
        return Ok(ReplayReport {
            frames: Vec::new(),
            steps: 0,
            max_reward_error: 0.0,
            final_progress: 0.0,
            final_door_theta: None,
        });
    };
    if every == 0 {
        return Err(Error::Config("frame interval must be positive".into()));
    }
    let h = &log.header;
    let (mut env, _) = Env::reset_in_band(h.task, h.scene_seed, h.spawn_seed, h.band)?;
    if env.scene.generator_version != h.generator_version {
        return Err(Error::Validation(format!(
            "log was recorded with scene generator {}, this build has {}",
            h.generator_version, env.scene.generator_version
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut frames = Vec::new();
    let emit = |env: &Env, frames: &mut Vec<PathBuf>| -> Result<()> {
        let path = out_dir.join(format!("frame_{:04}.svg", env.steps));
        fs::write(&path, render_svg(env))?;
        frames.push(path);
        Ok(())
    };
    emit(&env, &mut frames)?;
    let mut max_err: f64 = 0.0;
    for (i, rec) in log.steps.iter().enumerate() {
        if rec.step != i {
            return Err(Error::Parse(format!("step record {i} is numbered {}", rec.step)));
        }
        let r = env.step(&rec.action)?;
        for (a, b) in components(&r.reward).iter().zip(components(&rec.reward)) {
            max_err = max_err.max((a - b).abs());
        }
        if max_err > REWARD_TOLERANCE || !max_err.is_finite() {
            return Err(Error::Validation(format!(
                "step {i}: recomputed reward differs from the log by {max_err:e}"
            )));
        }
        let last = i + 1 == log.steps.len();
        if (i + 1) % every == 0 || last {
            emit(&env, &mut frames)?;
        }
    }
    Ok(ReplayReport {
        frames,
        steps: log.steps.len(),
        max_reward_error: max_err,
        final_progress: env.progress(),
        final_door_theta: env.door.map(|d| d.theta),
    })
}

/// Top-down view: rooms, walls, furniture, door panel, dirt, robot
/// footprint, arm, and gripper tip.
pub fn render_svg(env: &Env) -> String {
    let bounds = env.scene.bounds();
    let w = bounds.width() * PX_PER_M + 2.0 * MARGIN_PX;
    let h = bounds.height() * PX_PER_M + 2.0 * MARGIN_PX + 24.0;
    let px = |p: Vec2| {
        (
            (p.x - bounds.min.x) * PX_PER_M + MARGIN_PX,
            (bounds.max.y - p.y) * PX_PER_M + MARGIN_PX + 24.0,
        )
    };
    let rect = |out: &mut String, r: &Rect, style: &str| {
        let (x, y) = px(Vec2::new(r.min.x, r.max.y));
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            r.width() * PX_PER_M,
            r.height() * PX_PER_M
        );
    };
    let line = |out: &mut String, a: Vec2, b: Vec2, style: &str| {
        let (x1, y1) = px(a);
        let (x2, y2) = px(b);
        let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#);
    };
    let circle = |out: &mut String, c: Vec2, r: f64, style: &str| {
        let (x, y) = px(c);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#, r * PX_PER_M);
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for room in &env.scene.rooms {
        rect(&mut s, room, r##"fill="#f4f1ea" stroke="none""##);
    }
    for wall in &env.scene.walls {
        line(&mut s, wall.a, wall.b, r##"stroke="#222" stroke-width="4""##);
    }
    if let Some(t) = &env.scene.table {
        rect(&mut s, &t.rect, r##"fill="#c8a979" stroke="#7a5c2e""##);
    }
    for f in &env.scene.fixtures {
        rect(&mut s, f, r##"fill="#b9c4cc" stroke="#56636d""##);
    }
    for o in &env.scene.obstacles {
        rect(&mut s, o, r##"fill="#999" stroke="#555""##);
    }
    if let Some(d) = env.door {
        let panel = d.spec.panel_segment(d.theta);
        line(&mut s, panel.a, panel.b, r##"stroke="#d2691e" stroke-width="5""##);
        circle(&mut s, d.spec.hinge, 0.04, r##"fill="#333""##);
        circle(&mut s, d.spec.handle_planar(d.theta), 0.03, r##"fill="#0a0""##);
    }
    if let Some(dirt) = &env.dirt {
        for p in &dirt.remaining {
            circle(&mut s, *p, 0.02, r##"fill="#5b3a1a""##);
        }
    }
    let robot = &env.robot;
    let base = robot.base.position();
    circle(&mut s, base, LIMITS.base_radius, r##"fill="#4a78c2" fill-opacity="0.6" stroke="#1d3f7a""##);
    line(&mut s, base, base + robot.base.heading() * LIMITS.base_radius, r##"stroke="white" stroke-width="2""##);
    let ee = end_effector_planar(robot);
    let tip = gripper_tip_planar(robot);
    line(&mut s, base, ee, r##"stroke="#1d3f7a" stroke-width="3""##);
    line(&mut s, ee, tip, r##"stroke="#c21d1d" stroke-width="2""##);
    circle(&mut s, tip, 0.025, if robot.holding { r##"fill="#c21d1d""## } else { r##"fill="none" stroke="#c21d1d""## });
    let theta = env.door.map_or(String::new(), |d| format!(" theta={:.3}", d.theta));
    let _ = writeln!(
        s,
        r#"<text x="8" y="18" font-family="monospace" font-size="14">{} step={} progress={:.3}{theta}</text>"#,
        env.task.name(),
        env.steps,
        env.progress()
    );
    s.push_str("</svg>\n");
    s
}

/// Reads a log file and replays it into `out_dir`.
pub fn cmd_replay(log_path: &Path, out_dir: &Path, every: usize) -> Result<ReplayReport> {
    let text = fs::read_to_string(log_path)?;
    let log = EpisodeLog::from_jsonl(&text)?;
    replay(log.as_ref(), out_dir, every)
}
