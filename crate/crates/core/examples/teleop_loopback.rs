// Starts the teleoperation server on a local port and lets the scripted
// operator drive three episodes over the websocket.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::teleop::{ScriptedClient, ServeConfig, TeleopClient, TeleopServer};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("dexgrasp-example-teleop");
    let cfg = ServeConfig {
        task: Task::Bottle,
        lockstep: true,
        out_dir: dir.clone(),
        ..ServeConfig::default()
    };
    let server = TeleopServer::bind("127.0.0.1:0", cfg)?;
    let addr = server.local_addr()?;
    let stop = AtomicBool::new(false);
    let stats = std::thread::scope(|s| -> Result<_, Box<dyn std::error::Error>> {
        let handle = s.spawn(|| server.run(&stop, Some(1)));
        let mut client = TeleopClient::connect(addr, Duration::from_secs(10))?;
        println!("connected to {addr}: {:?}", client.hello());
        let mut op = ScriptedClient::new(EnvConfig::default(), Task::Bottle, 0.05, 0);
        for k in 0..3 {
            let ep = op.play(&mut client, (k > 0).then_some(None))?;
            println!(
                "episode {k}: {} after {} steps, return {:.1}, FK error {:.1e}",
                ep.event.as_str(), ep.steps, ep.total_reward, ep.max_fk_error
            );
        }
        client.quit()?;
        let stats = handle.join().expect("server thread")?;
        stop.store(true, Ordering::SeqCst);
        Ok(stats)
    })?;
    println!("saved {} demonstrations under {}", stats.saved.len(), dir.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
