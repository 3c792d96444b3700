//! Serves environments over TCP on a background thread and drives one
//! episode through the wire protocol with a fixed action.
//!
//! `cargo run --example remote_env`

use mmbench::env::TaskKind;
use mmbench::harness::server::{serve_tcp, RemoteEnv, Response};
use std::net::TcpListener;

fn main() -> mmbench::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    let server = std::thread::spawn(move || serve_tcp(listener, TaskKind::DoorPush, Some(1)));

    let mut env = RemoteEnv::connect(&addr)?;
    let obs = env.reset(TaskKind::DoorPush, 1_000_000, 7)?;
    println!("connected to {addr}; initial distance {:.2} m", obs.base_dist());
    let mut total = 0.0;
    for t in 0.. {
        let Response::Step { reward, terminated, truncated, info, .. } = env.step(&[0.5, 0.1, 0.2, 0.3, 0.0, 0.0])? else {
            unreachable!()
        };
        total += reward.total;
        if t % 100 == 0 || terminated || truncated {
            println!("step {t:>3}: reward {:+.4} progress {:.3} valid {}", reward.total, info.progress, info.valid);
        }
        if terminated || truncated {
            break;
        }
    }
    let log = env.log()?;
    println!("return {total:.3}; server log has {} lines", log.lines().count());
    env.close()?;
    server.join().expect("server thread")?;
    Ok(())
}
