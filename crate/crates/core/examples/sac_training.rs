// A short training run of each method, small enough to finish in about a
// minute. Artifacts land in a temporary directory.

use dexgrasp::demo::collect_demos;
use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::{train_with_demos, Method, RunConfig};
use dexgrasp::sac::SacConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let demos = collect_demos(&EnvConfig::default(), Task::Ball, 15, 0, 0.05)?;
    let dir = std::env::temp_dir().join("dexgrasp-example-sac");
    for method in Method::ALL {
        let cfg = RunConfig {
            method,
            total_iterations: 2,
            steps_per_iteration: 300,
            eval_episodes: 20,
            output_dir: dir.join(method.as_str()),
            sac: SacConfig {
                batch_size: 64,
                warmup_steps: 200,
                ..SacConfig::default()
            },
            ..RunConfig::default()
        };
        let out = train_with_demos(&cfg, Some(&demos))?;
        println!("{method}:");
        for r in &out.metrics {
            println!(
                "  iter {} ({:5} steps): success {:.2}, reward {:9.1}, q1 loss {}",
                r.iter,
                r.env_steps,
                r.success_rate,
                r.mean_reward,
                r.loss_q1.map_or("-".into(), |l| format!("{l:.3e}"))
            );
        }
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
