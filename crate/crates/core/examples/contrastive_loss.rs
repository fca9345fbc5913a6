// Trains a projection head on expert pairs against a random actor's
// actions at the same states, once per denominator mode.
//
// The batch-softmax over positive pairs alone can never drop below ln B;
// it bottoms out when every pair looks equally similar. The full InfoNCE
// matrix keeps going down as the head separates the pairs.

use dexgrasp::contrastive::{ClConfig, Contrastive, DenominatorMode};
use dexgrasp::demo::collect_demos;
use dexgrasp::env::{EnvConfig, Task, ACT_DIM};
use dexgrasp::sac::{normal_noise, PolicyNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let demos = collect_demos(&EnvConfig::default(), Task::Ball, 5, 0, 0.05)?;
    let b = 64;
    println!("batch {b}, ln B = {:.4}", (b as f64).ln());
    for mode in [DenominatorMode::Positives, DenominatorMode::Standard] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = PolicyNet::new(&mut rng);
        let cfg = ClConfig {
            denominator_mode: mode,
            ..ClConfig::default()
        };
        let mut cl = Contrastive::new(cfg, &mut rng)?;
        for step in 0..=200 {
            let (s, a) = demos.sample_batch(b, &mut rng)?;
            let eps = normal_noise(b, ACT_DIM, &mut rng);
            let loss = cl.head_update(&actor, &s, &a, &eps)?;
            if step % 50 == 0 {
                println!("{mode:?} head step {step:3}: loss {loss:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
