// A toy ablation over two seeds. Prints the markdown report; the curves
// CSV and SVG are written next to it.

use dexgrasp::demo::collect_demos;
use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::ablation::report_markdown;
use dexgrasp::harness::{ablation, Method, RunConfig};
use dexgrasp::sac::SacConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("dexgrasp-example-ablation");
    std::fs::create_dir_all(&dir)?;
    let demos = dir.join("demos.jsonl");
    collect_demos(&EnvConfig::default(), Task::Ball, 15, 0, 0.05)?.save(&demos)?;
    let base = RunConfig {
        total_iterations: 1,
        steps_per_iteration: 200,
        eval_episodes: 20,
        demos: Some(demos),
        output_dir: dir.clone(),
        sac: SacConfig {
            batch_size: 32,
            warmup_steps: 100,
            ..SacConfig::default()
        },
        ..RunConfig::default()
    };
    let report = ablation(&base, &[1, 2], &Method::ALL)?;
    println!("{}", report_markdown(&report));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
