//! Success of a joint and a factored controller as the spawn distance grows.
//! Uses the scripted controllers so it needs no checkpoints; pass learned
//! ones through `mmbench distance-sweep --config`.
//!
//! `cargo run --release --example distance_sweep -- [seeds]`

use mmbench::agents::ControllerKind;
use mmbench::env::TaskKind;
use mmbench::harness::{cmd_distance_sweep, BenchmarkConfig, SeedSpec, SweepConfig};

fn main() -> mmbench::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(60);
    let mut config = BenchmarkConfig::new(TaskKind::CleanTable, ControllerKind::ScriptedOracle);
    config.seeds = SeedSpec { count, ..SeedSpec::default() };
    config.output_dir = std::env::temp_dir().join("mmbench_sweep");
    config.sweep = Some(SweepConfig {
        bands: vec![[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]],
        factored: ControllerKind::ScriptedTwoStage,
        factored_checkpoints: Vec::new(),
    });
    let report = cmd_distance_sweep(&config)?;
    for r in &report.rows {
        println!(
            "[{:.0}, {:.0}] m: {:>3} seeds, joint {:>5.1}%, factored {:>5.1}%, difference {:+.1}",
            r.band[0],
            r.band[1],
            r.seeds_used,
            100.0 * r.joint.success_rate.mean,
            100.0 * r.factored.success_rate.mean,
            100.0 * r.success_difference
        );
    }
    println!("difference non-decreasing: {}", report.difference_non_decreasing);
    Ok(())
}
