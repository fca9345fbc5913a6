use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::demo::ScriptedExpert;
use crate::env::{Action, EnvConfig, Event, GraspEnv, Observation, Task, TraceWriter, ACT_DIM, OBS_DIM};
use crate::nn::{Checkpoint, Tensor};
use crate::sac::{actor_from_checkpoint, PolicyNet};

/// Anything that maps observations to actions.
pub trait Controller {
    fn act(&mut self, obs: &Observation) -> Result<Action, HarnessError>;
}

/// Deterministic policy `tanh(b(s))`.
pub struct Greedy<'a>(pub &'a PolicyNet);

impl Controller for Greedy<'_> {
    fn act(&mut self, obs: &Observation) -> Result<Action, HarnessError> {
        let s = Tensor::new(vec![1, OBS_DIM], obs.0.to_vec())?;
        let a = self.0.mean_action(&s)?;
        Ok(Action::from_slice(a.data())?)
    }
}

impl Controller for ScriptedExpert {
    fn act(&mut self, obs: &Observation) -> Result<Action, HarnessError> {
        Ok(ScriptedExpert::act(self, obs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_reward: f64,
    pub success_rate: f64,
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs `n` episodes on env seeds `seed..seed + n`. Success means the
/// episode ended on a success event.
pub fn evaluate_controller<C: Controller, W: Write>(
    ctrl: &mut C,
    env_cfg: &EnvConfig,
    task: Task,
    n: usize,
    seed: u64,
    mut trace: Option<&mut TraceWriter<W>>,
) -> Result<EvalResult, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    let mut env = GraspEnv::new(env_cfg.clone())?;
    let mut episodes = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let ep_seed = seed + k;
        let (_, mut obs) = env.reset(ep_seed, task);
        let (mut total, mut t) = (0.0, 0);
        let event = loop {
            let action = ctrl.act(&obs)?;
            let out = env.step(&action)?;
            if let Some(tw) = trace.as_deref_mut() {
                tw.step(t, obs.as_slice(), &action, &out.reward, out.event, out.done)?;
            }
            total += out.reward.total;
            t += 1;
            obs = out.observation;
            if out.done {
                break out.event;
            }
        };
        episodes.push(EpisodeSummary {
            seed: ep_seed,
            steps: t,
            total_reward: total,
            event,
        });
    }
    let successes = episodes.iter().filter(|e| e.event == Event::Success).count();
    Ok(EvalResult {
        mean_reward: episodes.iter().map(|e| e.total_reward).sum::<f64>() / n as f64,
        success_rate: successes as f64 / n as f64,
        episodes,
    })
}

pub fn evaluate_policy(
    actor: &PolicyNet,
    env_cfg: &EnvConfig,
    task: Task,
    n: usize,
    seed: u64,
) -> Result<EvalResult, HarnessError> {
    evaluate_controller::<_, std::io::Sink>(&mut Greedy(actor), env_cfg, task, n, seed, None)
}

/// Greedy evaluation of a checkpoint's actor, optionally tracing every step.
pub fn evaluate_checkpoint(
    checkpoint: impl AsRef<Path>,
    env_cfg: &EnvConfig,
    task: Task,
    n: usize,
    seed: u64,
    trace_path: Option<&Path>,
) -> Result<EvalResult, HarnessError> {
    let ck = Checkpoint::load(checkpoint)?;
    let actor = actor_from_checkpoint(&ck)?;
    if actor.obs_dim() != OBS_DIM || actor.act_dim() != ACT_DIM {
        return Err(HarnessError::Config(format!(
            "checkpoint actor is {}→{}, the environment needs {OBS_DIM}→{ACT_DIM}",
            actor.obs_dim(),
            actor.act_dim()
        )));
    }
    match trace_path {
        Some(p) => {
            let mut tw = TraceWriter::new(BufWriter::new(File::create(p)?));
            let r = evaluate_controller(&mut Greedy(&actor), env_cfg, task, n, seed, Some(&mut tw))?;
            tw.into_inner().flush()?;
            Ok(r)
        }
        None => evaluate_policy(&actor, env_cfg, task, n, seed),
    }
}
