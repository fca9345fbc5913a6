// Drives the scripted expert through one episode per task and prints the
// reward terms of each step.

use dexgrasp::demo::ScriptedExpert;
use dexgrasp::env::{EnvConfig, GraspEnv, Task};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnvConfig::default();
    let mut env = GraspEnv::new(cfg.clone())?;
    for task in [Task::Ball, Task::Bottle] {
        let mut expert = ScriptedExpert::new(cfg.clone(), task, 0.0, 0);
        let (state, mut obs) = env.reset(7, task);
        println!("{task}: object at {:.3?}", state.target.object());
        println!("  t  distance   smooth     event    pose      total  cos_psi  event");
        let mut t = 0;
        loop {
            let out = env.step(&expert.act(&obs))?;
            let r = out.reward;
            t += 1;
            println!(
                "{t:3} {:9.4} {:9.3} {:8.1} {:7.2} {:10.3} {:8.3}  {}",
                r.distance_term, r.smooth_term, r.event_term, r.pose_term, r.total, r.cos_psi, out.event.as_str()
            );
            obs = out.observation;
            if out.done {
                break;
            }
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
