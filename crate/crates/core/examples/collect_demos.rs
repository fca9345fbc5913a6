// Collects noisy scripted demonstrations, writes them as JSON lines and
// reads them back.

use dexgrasp::demo::{collect_demos, DemoSet};
use dexgrasp::env::{EnvConfig, Task};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let set = collect_demos(&EnvConfig::default(), Task::Bottle, 5, 0, 0.05)?;
    for t in set.trajectories() {
        println!("seed {:2}: {:3} steps, return {:8.1}", t.seed, t.len(), t.total_reward());
    }
    let path = std::env::temp_dir().join("dexgrasp-example-demos.jsonl");
    set.save(&path)?;
    let back = DemoSet::load(&path)?;
    assert_eq!(back, set);
    println!("{} pairs round-tripped through {}", back.num_pairs(), path.display());
    std::fs::remove_file(&path)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
