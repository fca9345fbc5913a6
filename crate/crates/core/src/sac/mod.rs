//! Soft actor-critic: squashed-Gaussian actor, twin critics with Polyak
//! averaged targets, and a replay buffer.

mod critic;
mod policy;
mod replay;

pub use critic::{BoundQ, QNet};
pub use policy::{squashed_log_density, BoundPolicy, PolicyNet, HIDDEN, LOG_STD_INIT, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer, Transition, DEFAULT_CAPACITY};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{polyak_update, Adam, AdamConfig, Checkpoint, NnError, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("replay buffer holds {size} transitions, {requested} requested")]
    BufferTooSmall { size: usize, requested: usize },
    #[error("non-finite {what} loss at update {update}")]
    NonFiniteLoss { what: &'static str, update: u64 },
    #[error("invalid SAC configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub updates_per_env_step: usize,
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            alpha: 1.0,
            tau: 0.005,
            batch_size: 512,
            learning_rate: 7.3e-4,
            updates_per_env_step: 1,
            warmup_steps: 1000,
            buffer_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SacError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(SacError::Config(format!("alpha {} is negative", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SacError::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || !(self.learning_rate > 0.0) {
            return Err(SacError::Config("batch size, capacity and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Standard-normal noise `[rows×cols]`.
pub fn normal_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape")
}

/// Bellman target `r + γ(1 − done)(min Q̄ᵢ(s′, a′) − α log π(a′|s′))` with
/// `a′` sampled from `actor` using `eps`. No tape is involved, so nothing
/// upstream receives gradient.
pub fn target_q(
    actor: &PolicyNet,
    q1_target: &QNet,
    q2_target: &QNet,
    batch: &Batch,
    eps: &Tensor,
    gamma: f64,
    alpha: f64,
) -> Result<Tensor, NnError> {
    let (a2, logp2) = actor.sample(&batch.next_states, eps)?;
    let q1 = q1_target.forward(&batch.next_states, &a2)?;
    let q2 = q2_target.forward(&batch.next_states, &a2)?;
    let data = (0..batch.len())
        .map(|i| {
            let r = batch.rewards.data()[i];
            if batch.dones.data()[i] != 0.0 {
                r
            } else {
                let soft = q1.data()[i].min(q2.data()[i]) - alpha * logp2.data()[i];
                r + gamma * soft
            }
        })
        .collect();
    Ok(Tensor::vector(data))
}

/// `½·mean((Q(s, a) − Q̄)²)` and its gradient with respect to the critic.
pub fn critic_loss_grad(q: &QNet, batch: &Batch, q_bar: &Tensor) -> Result<(f64, Vec<Tensor>), NnError> {
    let mut tape = Tape::new();
    let bq = q.bind(&mut tape, true);
    let s = tape.constant(batch.states.clone());
    let a = tape.constant(batch.actions.clone());
    let target = tape.constant(q_bar.clone());
    let pred = bq.forward(&mut tape, s, a)?;
    let diff = tape.sub(pred, target);
    let sq = tape.square(diff);
    let m = tape.mean(sq);
    let loss = tape.scale(m, 0.5);
    let g = tape.backward(loss)?;
    Ok((tape.value(loss).item(), bq.mlp.grads(&g)))
}

/// Scalar summaries of one actor step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorStats {
    /// Full objective, including any auxiliary term.
    pub loss: f64,
    /// `mean(α log π − min Qᵢ)`.
    pub base_loss: f64,
    /// Unweighted auxiliary loss, when one was added.
    pub aux_loss: Option<f64>,
    /// `−mean(log π)` of the sampled actions.
    pub entropy: f64,
}

/// Records `mean(α log π(a|s) − min Qᵢ(s, a))` for reparameterized `a`.
/// Critics are bound as constants. Returns `(base loss, log π)` vars.
pub fn record_actor_objective(
    tape: &mut Tape,
    bp: &BoundPolicy,
    q1: &QNet,
    q2: &QNet,
    states: &Tensor,
    eps: &Tensor,
    alpha: f64,
) -> Result<(Var, Var), NnError> {
    let s = tape.constant(states.clone());
    let (a, logp) = bp.sample(tape, s, eps)?;
    let q1v = q1.bind(tape, false).forward(tape, s, a)?;
    let q2v = q2.bind(tape, false).forward(tape, s, a)?;
    let qmin = tape.minimum(q1v, q2v);
    let ent = tape.scale(logp, alpha);
    let per = tape.sub(ent, qmin);
    let base = tape.mean(per);
    Ok((base, logp))
}

/// Online and target networks plus their optimizers.
#[derive(Clone, Debug)]
pub struct Sac {
    pub cfg: SacConfig,
    pub actor: PolicyNet,
    pub q1: QNet,
    pub q2: QNet,
    pub q1_target: QNet,
    pub q2_target: QNet,
    pub actor_opt: Adam,
    pub q1_opt: Adam,
    pub q2_opt: Adam,
    pub updates: u64,
}

impl Sac {
    /// Fresh networks; targets start as copies of the online critics.
    pub fn new<R: Rng + ?Sized>(cfg: SacConfig, actor: PolicyNet, rng: &mut R) -> Result<Self, SacError> {
        cfg.validate()?;
        let q1 = QNet::new(rng);
        let q2 = QNet::new(rng);
        Ok(Self::from_parts(cfg, actor, q1, q2))
    }

    pub fn from_parts(cfg: SacConfig, actor: PolicyNet, q1: QNet, q2: QNet) -> Self {
        let adam = AdamConfig::with_lr(cfg.learning_rate);
        let actor_opt = Adam::for_params(adam, actor.param_names("actor"), &actor.params());
        let q1_opt = Adam::for_params(adam, q1.mlp.param_names("q1"), &q1.mlp.params());
        let q2_opt = Adam::for_params(adam, q2.mlp.param_names("q2"), &q2.mlp.params());
        Self {
            cfg,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            actor_opt,
            q1_opt,
            q2_opt,
            updates: 0,
        }
    }

    pub fn target_q(&self, batch: &Batch, eps: &Tensor) -> Result<Tensor, SacError> {
        Ok(target_q(
            &self.actor,
            &self.q1_target,
            &self.q2_target,
            batch,
            eps,
            self.cfg.gamma,
            self.cfg.alpha,
        )?)
    }

    /// One Adam step on each critic toward `q_bar`. Returns both losses.
    pub fn critic_update(&mut self, batch: &Batch, q_bar: &Tensor) -> Result<(f64, f64), SacError> {
        let (l1, g1) = critic_loss_grad(&self.q1, batch, q_bar)?;
        let (l2, g2) = critic_loss_grad(&self.q2, batch, q_bar)?;
        for (l, what) in [(l1, "q1"), (l2, "q2")] {
            if !l.is_finite() {
                return Err(SacError::NonFiniteLoss {
                    what,
                    update: self.updates,
                });
            }
        }
        self.q1_opt.step(&mut self.q1.mlp.params_mut(), &g1)?;
        self.q2_opt.step(&mut self.q2.mlp.params_mut(), &g2)?;
        Ok((l1, l2))
    }

    pub fn actor_update(&mut self, states: &Tensor, eps: &Tensor) -> Result<ActorStats, SacError> {
        self.actor_update_with(states, eps, 0.0, |_, _| Ok::<_, SacError>(None))
    }

    /// One Adam step on the actor. `aux` may record an extra scalar loss on
    /// the same tape (typically through the bound actor), which is added
    /// with weight `aux_weight`. A zero weight skips `aux` entirely.
    pub fn actor_update_with<F, E>(
        &mut self,
        states: &Tensor,
        eps: &Tensor,
        aux_weight: f64,
        aux: F,
    ) -> Result<ActorStats, E>
    where
        F: FnOnce(&mut Tape, &BoundPolicy) -> Result<Option<Var>, E>,
        E: From<SacError>,
    {
        let mut tape = Tape::new();
        let bp = self.actor.bind(&mut tape, true);
        let (base, logp) = record_actor_objective(
            &mut tape,
            &bp,
            &self.q1,
            &self.q2,
            states,
            eps,
            self.cfg.alpha,
        )
        .map_err(SacError::from)?;
        let aux_var = if aux_weight != 0.0 { aux(&mut tape, &bp)? } else { None };
        let total = match aux_var {
            Some(v) => {
                let w = tape.scale(v, aux_weight);
                tape.add(base, w)
            }
            None => base,
        };
        let loss = tape.value(total).item();
        if !loss.is_finite() {
            return Err(SacError::NonFiniteLoss {
                what: "actor",
                update: self.updates,
            }
            .into());
        }
        let g = tape.backward(total).map_err(SacError::from)?;
        let grads = bp.grads(&g);
        self.actor_opt
            .step(&mut self.actor.params_mut(), &grads)
            .map_err(SacError::from)?;
        let lp = tape.value(logp);
        Ok(ActorStats {
            loss,
            base_loss: tape.value(base).item(),
            aux_loss: aux_var.map(|v| tape.value(v).item()),
            entropy: -lp.sum() / lp.len() as f64,
        })
    }

    /// `φ̄ ← τφ + (1 − τ)φ̄` for both critics.
    pub fn update_targets(&mut self) -> Result<(), SacError> {
        let tau = self.cfg.tau;
        polyak_update(&mut self.q1_target.mlp.params_mut(), &self.q1.mlp.params(), tau)?;
        polyak_update(&mut self.q2_target.mlp.params_mut(), &self.q2.mlp.params(), tau)?;
        self.updates += 1;
        Ok(())
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint) {
        add_actor(ck, &self.actor);
        ck.add_mlp("q1", &self.q1.mlp, true);
        ck.add_mlp("q2", &self.q2.mlp, true);
        ck.add_mlp("q1_target", &self.q1_target.mlp, true);
        ck.add_mlp("q2_target", &self.q2_target.mlp, true);
        ck.add_adam("actor_opt", &self.actor_opt, true);
        ck.add_adam("q1_opt", &self.q1_opt, true);
        ck.add_adam("q2_opt", &self.q2_opt, true);
        ck.counters.insert("sac.updates".into(), self.updates);
    }

    pub fn from_checkpoint(cfg: SacConfig, ck: &Checkpoint) -> Result<Self, SacError> {
        let actor = actor_from_checkpoint(ck)?;
        let q1 = QNet { mlp: ck.mlp("q1")? };
        let q2 = QNet { mlp: ck.mlp("q2")? };
        let mut sac = Self::from_parts(cfg, actor, q1, q2);
        sac.q1_target = QNet { mlp: ck.mlp("q1_target")? };
        sac.q2_target = QNet { mlp: ck.mlp("q2_target")? };
        ck.restore_adam("actor_opt", &mut sac.actor_opt)?;
        ck.restore_adam("q1_opt", &mut sac.q1_opt)?;
        ck.restore_adam("q2_opt", &mut sac.q2_opt)?;
        sac.updates = ck.counters.get("sac.updates").copied().unwrap_or(0);
        Ok(sac)
    }
}

pub fn add_actor(ck: &mut Checkpoint, actor: &PolicyNet) {
    ck.add_mlp("actor.trunk", &actor.trunk, false);
    ck.add_mlp("actor.mean", &actor.mean_head, false);
    ck.add_mlp("actor.log_std", &actor.log_std_head, false);
}

pub fn actor_from_checkpoint(ck: &Checkpoint) -> Result<PolicyNet, NnError> {
    Ok(PolicyNet {
        trunk: ck.mlp("actor.trunk")?,
        mean_head: ck.mlp("actor.mean")?,
        log_std_head: ck.mlp("actor.log_std")?,
    })
}
