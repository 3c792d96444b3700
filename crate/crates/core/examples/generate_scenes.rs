//! Generates a few scenes per task and prints their layout and the spread of
//! spawn distances.
//!
//! `cargo run --example generate_scenes -- [seeds]`

use mmbench::env::TaskKind;
use mmbench::scene::{generate_scene, sample_spawn, SpawnBand};

fn main() -> mmbench::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    for task in TaskKind::ALL {
        println!("{task}");
        for seed in 0..seeds {
            let scene = match generate_scene(task, seed) {
                Ok(s) => s,
                Err(e) => {
                    println!("  seed {seed}: {e}");
                    continue;
                }
            };
            let b = scene.bounds();
            print!(
                "  seed {seed}: {} rooms, {} walls, {} obstacles, extent {:.1} x {:.1} m",
                scene.rooms.len(),
                scene.walls.len(),
                scene.obstacles.len(),
                b.width(),
                b.height()
            );
            if let Some(d) = &scene.door {
                print!(", {:?} {:?} width {:.2} m", d.kind, d.mode, d.panel_width);
            }
            if let Some(t) = &scene.table {
                print!(", table {:.2} x {:.2} m with {} dirt points", t.rect.width(), t.rect.height(), t.dirt.len());
            }
            println!();
        }

        let band = SpawnBand::for_task(task);
        let scene = generate_scene(task, 0)?;
        let mut dists: Vec<f64> = (0..200)
            .filter_map(|s| sample_spawn(&scene, s).ok())
            .map(|p| scene.target_distance(p.position(), 0.0))
            .collect();
        dists.sort_by(f64::total_cmp);
        let lower = dists.iter().filter(|d| **d < band.midpoint()).count();
        println!(
            "  spawns in [{}, {}] m: {} drawn, {lower} below the midpoint, median {:.2} m",
            band.d_min,
            band.d_max,
            dists.len(),
            dists[dists.len() / 2]
        );
    }
    Ok(())
}
