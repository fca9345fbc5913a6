use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;

use clap::{Parser, Subcommand};

use dexgrasp::demo::{collect_demos, DemoSet};
use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::teleop::{ServeConfig, TeleopServer};
use dexgrasp::harness::{ablation, evaluate_checkpoint, pretrain_only, train, HarnessError, Method, RunConfig};
use dexgrasp::nn::Checkpoint;

#[derive(Parser)]
#[command(name = "dexgrasp", version, about = "Grasp learning: demonstrations, pretraining, SAC, evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record scripted expert demonstrations.
    Collect {
        #[arg(long, default_value = "ball")]
        task: Task,
        #[arg(long, default_value_t = 15)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Env seed of the first demonstration.
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavior cloning only.
    Pretrain {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full training run.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Defaults to the task recorded in the checkpoint, else ball.
        #[arg(long)]
        task: Option<Task>,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        #[arg(long)]
        env: Option<PathBuf>,
        /// Write one JSON line per step here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Every method over several seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "sac,bc_sac,bc_sac_cl")]
        methods: Vec<Method>,
    },
    /// Teleoperation websocket server.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "ball")]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        tick_hz: u32,
        #[arg(long, default_value = "teleop")]
        out_dir: PathBuf,
        /// Also save episodes that did not succeed.
        #[arg(long)]
        keep_failures: bool,
        #[arg(long)]
        env: Option<PathBuf>,
    },
}

fn env_config(path: Option<PathBuf>) -> Result<EnvConfig, HarnessError> {
    match path {
        Some(p) => Ok(EnvConfig::from_json(&std::fs::read_to_string(p)?)?),
        None => Ok(EnvConfig::default()),
    }
}

fn run_config(path: Option<PathBuf>) -> Result<RunConfig, HarnessError> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Collect {
            task,
            n,
            noise,
            first_seed,
            env,
            out,
        } => {
            let set = collect_demos(&env_config(env)?, task, n, first_seed, noise)?;
            set.save(&out)?;
            println!("{} demonstrations, {} pairs -> {}", set.trajectories().len(), set.num_pairs(), out.display());
        }
        Cmd::Pretrain { demos, config, out } => {
            let demos = DemoSet::load(&demos)?;
            let cfg = RunConfig {
                task: demos.task(),
                ..run_config(config)?
            };
            let (_, report) = pretrain_only(&cfg, &demos, &out)?;
            println!(
                "{} epochs, train loss {:.3e}, held-out loss {}, -> {}",
                report.history.len(),
                report.final_train_loss(),
                report.final_val_loss().map_or("n/a".into(), |v| format!("{v:.3e}")),
                out.join("bc.ckpt").display()
            );
        }
        Cmd::Train {
            config,
            method,
            seed,
            demos,
            out,
        } => {
            let mut cfg = run_config(config)?;
            cfg.method = method.unwrap_or(cfg.method);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.demos = demos.or(cfg.demos);
            cfg.output_dir = out.unwrap_or(cfg.output_dir);
            let outcome = train(&cfg)?;
            let r = &outcome.report;
            println!(
                "{} seed {}: success {:.2}, mean reward {:.2}, iterations to {:.0}%: {} -> {}",
                r.method,
                r.seed,
                r.final_success_rate,
                r.final_mean_reward,
                100.0 * r.success_threshold,
                r.iterations_to_threshold.map_or("not reached".into(), |i| i.to_string()),
                outcome.output_dir.display()
            );
        }
        Cmd::Eval {
            checkpoint,
            episodes,
            task,
            seed,
            env,
            trace,
        } => {
            let task = match task {
                Some(t) => t,
                None => Checkpoint::load(&checkpoint)?
                    .meta
                    .get("task")
                    .and_then(|v| v.as_str())
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(Task::Ball),
            };
            let r = evaluate_checkpoint(&checkpoint, &env_config(env)?, task, episodes, seed, trace.as_deref())?;
            println!(
                "{task}: success {:.3}, mean reward {:.3} over {episodes} episodes",
                r.success_rate, r.mean_reward
            );
        }
        Cmd::Ablate { config, seeds, methods } => {
            let report = ablation(&run_config(config)?, &seeds, &methods)?;
            print!("{}", dexgrasp::harness::ablation::report_markdown(&report));
        }
        Cmd::Serve {
            port,
            host,
            task,
            seed,
            tick_hz,
            out_dir,
            keep_failures,
            env,
        } => {
            let cfg = ServeConfig {
                task,
                seed,
                tick_hz,
                lockstep: false,
                keep_failures,
                out_dir,
                env: env_config(env)?,
            };
            let server = TeleopServer::bind((host.as_str(), port), cfg)?;
            println!("listening on ws://{}", server.local_addr()?);
            let stats = server.run(&AtomicBool::new(false), None)?;
            println!("{} sessions, {} saved, {} discarded", stats.sessions, stats.saved.len(), stats.discarded);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
