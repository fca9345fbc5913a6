//! Expert demonstrations: the scripted expert, trajectory files and the
//! uniform `(state, action)` buffer consumed by behavior cloning and the
//! contrastive head.

mod expert;
mod store;

use std::time::{SystemTime, UNIX_EPOCH};

pub use expert::ScriptedExpert;
pub use store::{DemoSet, DemoStep, Source, Trajectory};

use crate::env::{EnvConfig, EnvError, Event, GraspEnv, Task};

/// Attempts per requested demonstration before giving up.
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("record at line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("demonstration set is empty")]
    Empty,
    #[error("noise scale {0} outside [0, 0.2]")]
    Noise(f64),
    #[error("expert failed on env seed {seed} after {attempts} attempts")]
    ExpertFailed { seed: u64, attempts: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// One scripted episode; `None` when it ends without success.
pub fn rollout_expert(
    cfg: &EnvConfig,
    env_seed: u64,
    task: Task,
    noise_scale: f64,
    noise_seed: u64,
) -> Result<Option<Trajectory>, DemoError> {
    let mut env = GraspEnv::new(cfg.clone())?;
    let mut expert = ScriptedExpert::new(cfg.clone(), task, noise_scale, noise_seed);
    let (_, mut obs) = env.reset(env_seed, task);
    let mut steps = Vec::new();
    loop {
        let action = expert.act(&obs);
        let out = env.step(&action)?;
        steps.push(DemoStep {
            obs,
            action,
            reward: out.reward.total,
            event: out.event,
            done: out.done,
        });
        obs = out.observation;
        if out.done {
            break;
        }
    }
    if steps.last().map(|s| s.event) != Some(Event::Success) {
        return Ok(None);
    }
    Ok(Some(Trajectory {
        task,
        seed: env_seed,
        steps,
        source: Source::Scripted,
        created_at: unix_now(),
    }))
}

/// Successful scripted demonstration for `env_seed`. A failed attempt is
/// retried with a fresh noise seed, up to [`MAX_RETRIES`] attempts in total.
pub fn scripted_expert(
    cfg: &EnvConfig,
    env_seed: u64,
    task: Task,
    noise_scale: f64,
) -> Result<Trajectory, DemoError> {
    if !(0.0..=0.2).contains(&noise_scale) {
        return Err(DemoError::Noise(noise_scale));
    }
    for attempt in 0..MAX_RETRIES {
        let noise_seed = env_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt as u64);
        if let Some(t) = rollout_expert(cfg, env_seed, task, noise_scale, noise_seed)? {
            return Ok(t);
        }
        log::debug!("expert attempt {attempt} failed on env seed {env_seed}");
    }
    Err(DemoError::ExpertFailed {
        seed: env_seed,
        attempts: MAX_RETRIES,
    })
}

/// `count` demonstrations on env seeds `first_seed..first_seed + count`.
pub fn collect_demos(
    cfg: &EnvConfig,
    task: Task,
    count: usize,
    first_seed: u64,
    noise_scale: f64,
) -> Result<DemoSet, DemoError> {
    let mut set = DemoSet::new(task);
    for k in 0..count as u64 {
        set.push(scripted_expert(cfg, first_seed + k, task, noise_scale)?)?;
    }
    Ok(set)
}
