use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_policy;
use super::metrics::{iterations_to_threshold, metrics_csv, timing_csv, IterationMetrics};
use super::{HarnessError, Method, RunConfig};
use crate::bc::{pretrain, BcReport};
use crate::contrastive::Contrastive;
use crate::demo::DemoSet;
use crate::env::{Action, GraspEnv, ACT_DIM, OBS_DIM};
use crate::nn::{Checkpoint, Tensor};
use crate::sac::{add_actor, normal_noise, PolicyNet, ReplayBuffer, Sac, Transition};

/// Independent random streams, so that switching one component on or off
/// never shifts the numbers another component sees.
#[derive(Clone, Copy)]
enum Stream {
    Init = 0,
    HeadInit,
    Bc,
    EnvSeeds,
    Explore,
    Replay,
    TargetNoise,
    ActorNoise,
    ExpertBatch,
    ClNoise,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub task: crate::env::Task,
    pub seed: u64,
    pub iterations: usize,
    pub env_steps: u64,
    pub gradient_updates: u64,
    pub final_success_rate: f64,
    pub final_mean_reward: f64,
    pub success_threshold: f64,
    pub iterations_to_threshold: Option<usize>,
    pub bc_final_train_loss: Option<f64>,
    pub bc_final_val_loss: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub metrics: Vec<IterationMetrics>,
    pub bc: Option<BcReport>,
    pub report: RunReport,
    pub actor: PolicyNet,
}

/// Loads the run's demonstrations, or fails when a pretraining method has none.
pub fn load_demos(cfg: &RunConfig) -> Result<Option<DemoSet>, HarnessError> {
    if !cfg.method.pretrains() {
        return Ok(None);
    }
    let path = cfg.demos.as_ref().ok_or_else(|| {
        HarnessError::Config(format!("method {} needs a demonstration file (`demos`)", cfg.method))
    })?;
    if !path.exists() {
        return Err(HarnessError::Config(format!("demonstration file {} not found", path.display())));
    }
    Ok(Some(DemoSet::load(path)?))
}

/// Runs a full training job, reading demonstrations from `cfg.demos`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let demos = load_demos(cfg)?;
    train_with_demos(cfg, demos.as_ref())
}

struct UpdateSums {
    n: u64,
    q1: f64,
    q2: f64,
    pi: f64,
    cl: f64,
    cl_n: u64,
    entropy: f64,
}

impl UpdateSums {
    fn new() -> Self {
        Self {
            n: 0,
            q1: 0.0,
            q2: 0.0,
            pi: 0.0,
            cl: 0.0,
            cl_n: 0,
            entropy: 0.0,
        }
    }

    fn mean(&self, v: f64) -> Option<f64> {
        (self.n > 0).then(|| v / self.n as f64)
    }
}

fn bc_phase(actor: &mut PolicyNet, demos: &DemoSet, cfg: &RunConfig, out_dir: &Path) -> Result<BcReport, HarnessError> {
    let bc_seed = stream(cfg.seed, Stream::Bc).gen::<u64>();
    let report = pretrain(actor, demos, &cfg.bc, bc_seed)?;
    log::info!(
        "behavior cloning: {} epochs, train {:.3e}, held-out {:?}",
        report.history.len(),
        report.final_train_loss(),
        report.final_val_loss()
    );
    fs::create_dir_all(out_dir)?;
    let mut ck = Checkpoint::new("bc", cfg.seed);
    add_actor(&mut ck, actor);
    ck.meta.insert("task".into(), cfg.task.to_string().into());
    ck.save(out_dir.join("bc.ckpt"))?;
    fs::write(out_dir.join("bc_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Behavior cloning alone: the same initial actor and pretraining that
/// [`train`] would run for `cfg`, written to `out_dir/bc.ckpt` and
/// `out_dir/bc_report.json`.
pub fn pretrain_only(cfg: &RunConfig, demos: &DemoSet, out_dir: &Path) -> Result<(PolicyNet, BcReport), HarnessError> {
    cfg.validate()?;
    if demos.task() != cfg.task {
        return Err(HarnessError::Config(format!(
            "demonstrations are for {}, the run is for {}",
            demos.task(),
            cfg.task
        )));
    }
    let mut actor = PolicyNet::new(&mut stream(cfg.seed, Stream::Init));
    let report = bc_phase(&mut actor, demos, cfg, out_dir)?;
    Ok((actor, report))
}

/// Runs a training job with demonstrations already in memory.
pub fn train_with_demos(cfg: &RunConfig, demos: Option<&DemoSet>) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let demos = match (cfg.method.pretrains(), demos) {
        (false, _) => None,
        (true, None) => {
            return Err(HarnessError::Config(format!("method {} needs demonstrations", cfg.method)));
        }
        (true, Some(d)) if d.task() != cfg.task => {
            return Err(HarnessError::Config(format!(
                "demonstrations are for {}, the run is for {}",
                d.task(),
                cfg.task
            )));
        }
        (true, Some(d)) if d.is_empty() => return Err(crate::demo::DemoError::Empty.into()),
        (true, Some(d)) => Some(d),
    };
    let out_dir = cfg.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.json"), cfg.to_json())?;

    let mut init_rng = stream(cfg.seed, Stream::Init);
    let mut actor = PolicyNet::new(&mut init_rng);

    let bc_report = match demos {
        Some(d) => Some(bc_phase(&mut actor, d, cfg, &out_dir)?),
        None => None,
    };

    let mut sac = Sac::new(cfg.sac.clone(), actor, &mut init_rng)?;
    let mut contrastive = if cfg.method.uses_contrastive() {
        Some(Contrastive::new(cfg.contrastive.clone(), &mut stream(cfg.seed, Stream::HeadInit))?)
    } else {
        None
    };
    let xi4 = cfg.contrastive.xi4;

    let mut env_seeds = stream(cfg.seed, Stream::EnvSeeds);
    let mut explore = stream(cfg.seed, Stream::Explore);
    let mut replay_rng = stream(cfg.seed, Stream::Replay);
    let mut target_rng = stream(cfg.seed, Stream::TargetNoise);
    let mut actor_rng = stream(cfg.seed, Stream::ActorNoise);
    let mut expert_rng = stream(cfg.seed, Stream::ExpertBatch);
    let mut cl_rng = stream(cfg.seed, Stream::ClNoise);

    let mut env = GraspEnv::new(cfg.env.clone())?;
    let mut buffer = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let mut env_steps: u64 = 0;
    let b = cfg.sac.batch_size;

    let mut metrics = Vec::with_capacity(cfg.total_iterations + 1);
    let eval = |actor: &PolicyNet| evaluate_policy(actor, &cfg.env, cfg.task, cfg.eval_episodes, cfg.eval_seed);
    let t0 = Instant::now();
    let first = eval(&sac.actor)?;
    metrics.push(IterationMetrics {
        iter: 0,
        env_steps: 0,
        mean_reward: first.mean_reward,
        success_rate: first.success_rate,
        loss_q1: None,
        loss_q2: None,
        loss_pi: None,
        loss_cl: None,
        entropy: None,
        wall_seconds: t0.elapsed().as_secs_f64(),
    });
    log::info!(
        "{} seed {} iter 0: success {:.2}, reward {:.1}",
        cfg.method,
        cfg.seed,
        first.success_rate,
        first.mean_reward
    );

    let checkpoint = |sac: &Sac, cl: Option<&Contrastive>, phase: &str, iter: usize, env_steps: u64, buffer: &ReplayBuffer| {
        let mut ck = Checkpoint::new(phase, cfg.seed);
        sac.add_to_checkpoint(&mut ck);
        if let Some(c) = cl {
            c.add_to_checkpoint(&mut ck);
        }
        ck.counters.insert("iter".into(), iter as u64);
        ck.counters.insert("env_steps".into(), env_steps);
        ck.counters.insert("buffer.len".into(), buffer.len() as u64);
        ck.counters.insert("buffer.cursor".into(), buffer.cursor() as u64);
        ck.meta.insert("method".into(), cfg.method.as_str().into());
        ck.meta.insert("task".into(), cfg.task.to_string().into());
        ck.meta.insert("buffer_included".into(), false.into());
        ck
    };

    let mut obs = env.reset(env_seeds.gen(), cfg.task).1;
    for iter in 1..=cfg.total_iterations {
        let t_iter = Instant::now();
        let mut sums = UpdateSums::new();
        for _ in 0..cfg.steps_per_iteration {
            if env.is_done() {
                obs = env.reset(env_seeds.gen(), cfg.task).1;
            }
            let action = if (env_steps as usize) < cfg.sac.warmup_steps {
                Action(std::array::from_fn(|_| explore.gen_range(-1.0..=1.0)))
            } else {
                let s = Tensor::new(vec![1, OBS_DIM], obs.0.to_vec())?;
                let eps = normal_noise(1, ACT_DIM, &mut explore);
                let (a, _) = sac.actor.sample(&s, &eps)?;
                Action::from_slice(a.data())?
            };
            let out = env.step(&action)?;
            buffer.push(Transition {
                state: obs.0,
                action: action.0,
                reward: out.reward.total,
                next_state: out.observation.0,
                done: out.event.is_terminal(),
            });
            obs = out.observation;
            env_steps += 1;

            if (env_steps as usize) < cfg.sac.warmup_steps || buffer.len() < b {
                continue;
            }
            for _ in 0..cfg.sac.updates_per_env_step {
                let batch = buffer.sample(b, &mut replay_rng)?;
                let eps_next = normal_noise(b, ACT_DIM, &mut target_rng);
                let q_bar = sac.target_q(&batch, &eps_next)?;
                let (l1, l2) = sac.critic_update(&batch, &q_bar)?;
                let expert = match (&mut contrastive, demos) {
                    (Some(c), Some(d)) => {
                        let (se, ae) = d.sample_batch(b, &mut expert_rng)?;
                        let eps_cl = normal_noise(b, ACT_DIM, &mut cl_rng);
                        let l_cl = c.head_update(&sac.actor, &se, &ae, &eps_cl)?;
                        sums.cl += l_cl;
                        sums.cl_n += 1;
                        Some((se, ae, eps_cl))
                    }
                    _ => None,
                };
                let eps_pi = normal_noise(b, ACT_DIM, &mut actor_rng);
                let cl_ref = contrastive.as_ref();
                let weight = if cl_ref.is_some() { xi4 } else { 0.0 };
                let stats = sac.actor_update_with(&batch.states, &eps_pi, weight, |tape, bp| {
                    match (cl_ref, &expert) {
                        (Some(c), Some((se, ae, eps_cl))) => {
                            Ok::<_, HarnessError>(Some(c.record_actor_term(tape, bp, se, ae, eps_cl)?))
                        }
                        _ => Ok(None),
                    }
                })?;
                sac.update_targets()?;
                sums.n += 1;
                sums.q1 += l1;
                sums.q2 += l2;
                sums.pi += stats.loss;
                sums.entropy += stats.entropy;
            }
        }
        let result = eval(&sac.actor)?;
        let row = IterationMetrics {
            iter,
            env_steps,
            mean_reward: result.mean_reward,
            success_rate: result.success_rate,
            loss_q1: sums.mean(sums.q1),
            loss_q2: sums.mean(sums.q2),
            loss_pi: sums.mean(sums.pi),
            loss_cl: (sums.cl_n > 0).then(|| sums.cl / sums.cl_n as f64),
            entropy: sums.mean(sums.entropy),
            wall_seconds: t_iter.elapsed().as_secs_f64(),
        };
        log::info!(
            "{} seed {} iter {iter}: success {:.2}, reward {:.1}, {:.1}s",
            cfg.method,
            cfg.seed,
            row.success_rate,
            row.mean_reward,
            row.wall_seconds
        );
        metrics.push(row);
        if cfg.checkpoint_every.is_some_and(|k| iter % k == 0) {
            checkpoint(&sac, contrastive.as_ref(), "sac", iter, env_steps, &buffer)
                .save(out_dir.join(format!("iter_{iter:04}.ckpt")))?;
        }
        fs::write(out_dir.join("metrics.csv"), metrics_csv(&metrics))?;
    }

    let final_ck = checkpoint(&sac, contrastive.as_ref(), "final", cfg.total_iterations, env_steps, &buffer);
    final_ck.save(out_dir.join("final.ckpt"))?;
    final_ck.deployment().save(out_dir.join("deploy.ckpt"))?;
    fs::write(out_dir.join("metrics.csv"), metrics_csv(&metrics))?;
    fs::write(out_dir.join("timing.csv"), timing_csv(&metrics))?;

    let last = metrics.last().expect("iteration 0 is always evaluated");
    let report = RunReport {
        method: cfg.method,
        task: cfg.task,
        seed: cfg.seed,
        iterations: cfg.total_iterations,
        env_steps,
        gradient_updates: sac.updates,
        final_success_rate: last.success_rate,
        final_mean_reward: last.mean_reward,
        success_threshold: cfg.success_threshold,
        iterations_to_threshold: iterations_to_threshold(&metrics, cfg.success_threshold),
        bc_final_train_loss: bc_report.as_ref().map(|r| r.final_train_loss()),
        bc_final_val_loss: bc_report.as_ref().and_then(|r| r.final_val_loss()),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(TrainOutcome {
        output_dir: out_dir,
        metrics,
        bc: bc_report,
        report,
        actor: sac.actor,
    })
}

/// Paths of the standard run artifacts.
pub fn run_files(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("metrics.csv"),
        dir.join("final.ckpt"),
        dir.join("deploy.ckpt"),
        dir.join("report.json"),
    ]
}
