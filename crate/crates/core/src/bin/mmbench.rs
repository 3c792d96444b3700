use clap::{Args, Parser, Subcommand};
use mmbench::agents::ControllerKind;
use mmbench::env::TaskKind;
use mmbench::harness::{self, render_table, replay, server, BenchmarkConfig, SeedSpec, TrainJob, QUICK_EPISODES};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmbench", version, about = "Mobile-manipulation benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes and write them as TOML files.
    GenScenes {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "scenes")]
        out: PathBuf,
    },
    /// Run a controller over a seed list and report the metric table.
    Evaluate(EvalArgs),
    /// Train learned controllers for every replicate seed.
    Train {
        /// Training job file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        replicates: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory holding checkpoints to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare a joint and a factored controller across spawn-distance bands.
    DistanceSweep(EvalArgs),
    /// Re-execute an episode log and render SVG frames.
    Replay {
        log: PathBuf,
        #[arg(long, default_value = "frames")]
        out: PathBuf,
        /// Steps between frames.
        #[arg(long, default_value_t = 10)]
        every: usize,
    },
    /// Serve environments over stdio or TCP.
    Serve {
        #[arg(long, default_value = "door_push")]
        task: TaskKind,
        /// Address to listen on, e.g. 127.0.0.1:7070; stdio when omitted.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Benchmark file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    start: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate only the first 50 seeds.
    #[arg(long)]
    quick: bool,
}

impl EvalArgs {
    fn resolve(self) -> mmbench::Result<BenchmarkConfig> {
        let mut config = match &self.config {
            Some(path) => BenchmarkConfig::load(path)?,
            None => {
                let task = self.task.ok_or_else(|| mmbench::Error::Config("--task or --config is required".into()))?;
                BenchmarkConfig::new(task, self.controller.unwrap_or(ControllerKind::ScriptedOracle))
            }
        };
        if let Some(t) = self.task {
            config.task = t;
        }
        if let Some(c) = self.controller {
            config.controller = c;
        }
        if !self.checkpoints.is_empty() {
            config.checkpoints = self.checkpoints;
        }
        if self.start.is_some() || self.count.is_some() {
            config.seeds = SeedSpec {
                list: Vec::new(),
                start: self.start.unwrap_or(config.seeds.start),
                count: self.count.unwrap_or(config.seeds.count),
            };
        }
        if let Some(o) = self.out {
            config.output_dir = o;
        }
        if self.quick {
            config.seeds = config.seeds.truncated(QUICK_EPISODES);
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> mmbench::Result<()> {
    match cli.command {
        Command::GenScenes { task, start, count, out } => {
            let (written, failed) = harness::cmd_gen_scenes(task, start, count, &out)?;
            println!("wrote {} scenes to {}", written.len(), out.display());
            for (seed, err) in failed {
                eprintln!("seed {seed}: {err}");
            }
        }
        Command::Evaluate(args) => {
            let config = args.resolve()?;
            let report = harness::cmd_evaluate(&config)?;
            print!("{}", render_table(&[report.aggregate]));
            println!("results in {}", config.output_dir.display());
        }
        Command::Train { config, task, controller, steps, replicates, out, resume } => {
            let mut job = match config {
                Some(p) => TrainJob::load(&p)?,
                None => TrainJob::from_toml("")?,
            };
            if let Some(t) = task {
                job.train.task = t;
            }
            if let Some(c) = controller {
                job.train.controller = c;
            }
            if let Some(s) = steps {
                job.train.total_steps = s;
            }
            if let Some(r) = replicates {
                job.replicates = r;
            }
            if let Some(o) = out {
                job.output_dir = o;
            }
            let report = harness::cmd_train(&job, resume.as_deref(), &mut |seed, rec| {
                if let Some(s) = rec.eval_success {
                    println!(
                        "seed {seed} iter {} steps {} held-out success {:.3} progress {:.3}",
                        rec.iteration,
                        rec.env_steps,
                        s,
                        rec.eval_progress.unwrap_or(0.0)
                    );
                }
            })?;
            for (path, s) in report.checkpoints.iter().zip(&report.final_success) {
                println!("{} final held-out success {}", path.display(), s.map_or("-".into(), |s| format!("{s:.3}")));
            }
        }
        Command::DistanceSweep(args) => {
            let config = args.resolve()?;
            let report = harness::cmd_distance_sweep(&config)?;
            println!("{:<12} {:>6} {:>10} {:>10} {:>11}", "band", "seeds", "joint %", "factored %", "difference");
            for r in &report.rows {
                println!(
                    "{:<12} {:>6} {:>10.1} {:>10.1} {:>11.1}",
                    format!("[{}, {}]", r.band[0], r.band[1]),
                    r.seeds_used,
                    100.0 * r.joint.success_rate.mean,
                    100.0 * r.factored.success_rate.mean,
                    100.0 * r.success_difference
                );
            }
            println!("difference non-decreasing across bands: {}", report.difference_non_decreasing);
        }
        Command::Replay { log, out, every } => {
            let report = replay::cmd_replay(&log, &out, every)?;
            println!(
                "{} steps replayed, {} frames, max reward deviation {:e}",
                report.steps,
                report.frames.len(),
                report.max_reward_error
            );
        }
        Command::Serve { task, listen } => match listen {
            Some(addr) => {
                let listener = TcpListener::bind(&addr)?;
                eprintln!("serving {task} on {}", listener.local_addr()?);
                server::serve_tcp(listener, task, None)?;
            }
            None => server::serve_stdio(task)?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
