// Clones 15 scripted demonstrations and evaluates the greedy policy.

use dexgrasp::bc::{pretrain, BcConfig};
use dexgrasp::demo::collect_demos;
use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::evaluate_policy;
use dexgrasp::sac::PolicyNet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnvConfig::default();
    let demos = collect_demos(&cfg, Task::Ball, 15, 0, 0.05)?;
    let mut actor = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(0));
    let before = evaluate_policy(&actor, &cfg, Task::Ball, 50, 1_000_000)?;
    let report = pretrain(&mut actor, &demos, &BcConfig::default(), 0)?;
    for e in report.history.iter().step_by(500) {
        println!("epoch {:4}: train {:.3e}, held-out {:.3e}", e.epoch, e.train_loss, e.val_loss.unwrap_or(f64::NAN));
    }
    let after = evaluate_policy(&actor, &cfg, Task::Ball, 50, 1_000_000)?;
    println!(
        "greedy success over 50 episodes: {:.2} before cloning, {:.2} after",
        before.success_rate, after.success_rate
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
