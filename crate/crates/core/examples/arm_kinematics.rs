//! Drives the arm joints through a few commands and prints the wrist and
//! gripper-tip positions, then solves the arm for a planar target.
//!
//! `cargo run --example arm_kinematics`

use mmbench::agents::arm_ik;
use mmbench::env::TaskKind;
use mmbench::geometry::{Pose2, Vec2};
use mmbench::kinematics::{apply_action, clamp_action, end_effector_position, gripper_tip, RobotState};
use mmbench::scene::{generate_scene, sample_spawn};

fn main() -> mmbench::Result<()> {
    let scene = generate_scene(TaskKind::CleanTable, 0)?;
    let spawn = sample_spawn(&scene, 0)?;
    let mut robot = RobotState::new(spawn);
    let fmt = |p: [f64; 3]| format!("({:.3}, {:.3}, {:.3})", p[0], p[1], p[2]);
    println!("start  lift {:.2} ext {:.2} wrist {:.2}  ee {}", robot.lift, robot.extension, robot.wrist, fmt(end_effector_position(&robot)));

    let plan: [(&str, [f64; 6], usize); 4] = [
        ("raise", [0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 6),
        ("extend", [0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 12),
        ("turn wrist", [0.0, 0.0, 0.0, 0.0, 1.0, 0.0], 5),
        ("drive", [1.0, 0.3, 0.0, 0.0, 0.0, 0.0], 5),
    ];
    for (name, raw, repeats) in plan {
        let cmd = clamp_action(&raw, false)?;
        let mut blocked = 0;
        for _ in 0..repeats {
            let (next, valid) = apply_action(&robot, &cmd, &scene, 0.0);
            blocked += usize::from(!valid);
            robot = next;
        }
        println!(
            "{name:<10} lift {:.2} ext {:.2} wrist {:+.2}  ee {}  tip {}{}",
            robot.lift,
            robot.extension,
            robot.wrist,
            fmt(end_effector_position(&robot)),
            fmt(gripper_tip(&robot)),
            if blocked > 0 { format!("  ({blocked} base moves blocked)") } else { String::new() }
        );
    }

    // The arm reaches out of the robot's right side.
    let base = Pose2::new(0.0, 0.0, 0.0);
    let target = Vec2::new(0.2, -0.5);
    let (extension, wrist) = arm_ik(&base, target, 0.0);
    let solved = RobotState { extension, wrist, ..RobotState::new(base) };
    let tip = gripper_tip(&solved);
    println!(
        "ik for ({}, {}): extension {extension:.3}, wrist {wrist:+.3} -> tip ({:.3}, {:.3})",
        target.x, target.y, tip[0], tip[1]
    );
    Ok(())
}
