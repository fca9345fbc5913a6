//! Projection head and contrastive loss that pull the actor's state-action
//! embeddings toward those of the expert at the same states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ACT_DIM, OBS_DIM};
use crate::nn::{
    concat_cols, Activation, Adam, AdamConfig, Checkpoint, Mlp, NnError, Tape, Tensor, Var,
};
use crate::sac::{BoundPolicy, PolicyNet, SacError, HIDDEN};

pub const EMBED_DIM: usize = 128;
/// Rows with a smaller Euclidean norm have no defined cosine similarity.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ClError {
    #[error("{which} embedding row {row} has zero norm")]
    ZeroNorm { which: &'static str, row: usize },
    #[error("embedding batches differ: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("empty batch")]
    Empty,
    #[error("non-finite contrastive loss at head update {0}")]
    NonFinite(u64),
    #[error("invalid contrastive configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sac(#[from] SacError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenominatorMode {
    /// Softmax over the positive-pair similarities of the batch.
    #[default]
    Positives,
    /// Softmax over every expert/actor pairing in the batch.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClConfig {
    pub tau_cl: f64,
    pub xi4: f64,
    pub denominator_mode: DenominatorMode,
    pub learning_rate: f64,
}

impl Default for ClConfig {
    fn default() -> Self {
        Self {
            tau_cl: 0.1,
            xi4: 0.5,
            denominator_mode: DenominatorMode::Positives,
            learning_rate: 7.3e-4,
        }
    }
}

impl ClConfig {
    pub fn validate(&self) -> Result<(), ClError> {
        if !(self.tau_cl > 0.0) {
            return Err(ClError::Config(format!("tau_cl {} must be positive", self.tau_cl)));
        }
        if !(self.xi4 >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(ClError::Config("xi4 must be non-negative and the learning rate positive".into()));
        }
        Ok(())
    }
}

/// MLP from `state ⊕ action` to a 128-wide embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub mlp: Mlp,
}

impl ProjectionHead {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(
                &[OBS_DIM + ACT_DIM, HIDDEN, HIDDEN, EMBED_DIM],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
        }
    }

    pub fn embed(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor, ClError> {
        if states.rows() != actions.rows() {
            return Err(ClError::Shape(states.shape().to_vec(), actions.shape().to_vec()));
        }
        Ok(self.mlp.forward(&concat_cols(states, actions))?)
    }
}

fn check_rows(t: &Tensor, which: &'static str) -> Result<(), ClError> {
    for r in 0..t.rows() {
        let n = t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n >= MIN_NORM) {
            return Err(ClError::ZeroNorm { which, row: r });
        }
    }
    Ok(())
}

/// Records the contrastive loss between row-aligned embeddings.
pub fn record_contrastive_loss(
    tape: &mut Tape,
    h_expert: Var,
    h_actor: Var,
    tau: f64,
    mode: DenominatorMode,
) -> Result<Var, ClError> {
    let (se, sa) = (tape.value(h_expert).shape().to_vec(), tape.value(h_actor).shape().to_vec());
    if se != sa || se.len() != 2 {
        return Err(ClError::Shape(se, sa));
    }
    if se[0] == 0 {
        return Err(ClError::Empty);
    }
    check_rows(tape.value(h_expert), "expert")?;
    check_rows(tape.value(h_actor), "actor")?;
    let ne = tape.normalize_rows(h_expert);
    let na = tape.normalize_rows(h_actor);
    let loss = match mode {
        DenominatorMode::Positives => {
            let sim = tape.row_dot(ne, na);
            let z = tape.scale(sim, 1.0 / tau);
            let lse = tape.logsumexp(z);
            let m = tape.mean(z);
            tape.sub(lse, m)
        }
        DenominatorMode::Standard => {
            let sim = tape.matmul_nt(ne, na);
            let z = tape.scale(sim, 1.0 / tau);
            let lse = tape.logsumexp_rows(z);
            let pos = tape.diag(z);
            let per = tape.sub(lse, pos);
            tape.mean(per)
        }
    };
    Ok(loss)
}

/// Loss value for plain embeddings.
pub fn contrastive_loss(
    h_expert: &Tensor,
    h_actor: &Tensor,
    tau: f64,
    mode: DenominatorMode,
) -> Result<f64, ClError> {
    let mut tape = Tape::new();
    let e = tape.constant(h_expert.clone());
    let a = tape.constant(h_actor.clone());
    let l = record_contrastive_loss(&mut tape, e, a, tau, mode)?;
    Ok(tape.value(l).item())
}

/// Projection head with its optimizer.
#[derive(Clone, Debug)]
pub struct Contrastive {
    pub cfg: ClConfig,
    pub head: ProjectionHead,
    pub opt: Adam,
}

impl Contrastive {
    pub fn new<R: Rng + ?Sized>(cfg: ClConfig, rng: &mut R) -> Result<Self, ClError> {
        cfg.validate()?;
        let head = ProjectionHead::new(rng);
        Ok(Self::from_head(cfg, head))
    }

    pub fn from_head(cfg: ClConfig, head: ProjectionHead) -> Self {
        let opt = Adam::for_params(
            AdamConfig::with_lr(cfg.learning_rate),
            head.mlp.param_names("head"),
            &head.mlp.params(),
        );
        Self { cfg, head, opt }
    }

    /// Loss and head gradients with the actor frozen; actor actions are
    /// sampled at the expert states with noise `eps`.
    pub fn head_loss_grad(
        &self,
        actor: &PolicyNet,
        expert_states: &Tensor,
        expert_actions: &Tensor,
        eps: &Tensor,
    ) -> Result<(f64, Vec<Tensor>), ClError> {
        let (actor_actions, _) = actor.sample(expert_states, eps)?;
        let mut tape = Tape::new();
        let head = self.head.mlp.bind(&mut tape, true);
        let xe = tape.constant(concat_cols(expert_states, expert_actions));
        let xa = tape.constant(concat_cols(expert_states, &actor_actions));
        let he = head.forward(&mut tape, xe)?;
        let ha = head.forward(&mut tape, xa)?;
        let loss = record_contrastive_loss(&mut tape, he, ha, self.cfg.tau_cl, self.cfg.denominator_mode)?;
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).item(), head.grads(&g)))
    }

    /// One Adam step on the head. Returns the loss before the step.
    pub fn head_update(
        &mut self,
        actor: &PolicyNet,
        expert_states: &Tensor,
        expert_actions: &Tensor,
        eps: &Tensor,
    ) -> Result<f64, ClError> {
        let (loss, grads) = self.head_loss_grad(actor, expert_states, expert_actions, eps)?;
        if !loss.is_finite() {
            return Err(ClError::NonFinite(self.opt.step_count()));
        }
        self.opt.step(&mut self.head.mlp.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Records the loss on an actor tape with the head frozen, so gradient
    /// reaches the actor through its reparameterized samples.
    pub fn record_actor_term(
        &self,
        tape: &mut Tape,
        actor: &BoundPolicy,
        expert_states: &Tensor,
        expert_actions: &Tensor,
        eps: &Tensor,
    ) -> Result<Var, ClError> {
        let he = tape.constant(self.head.embed(expert_states, expert_actions)?);
        let s = tape.constant(expert_states.clone());
        let (a, _) = actor.sample(tape, s, eps)?;
        let x = tape.concat_cols(s, a);
        let head = self.head.mlp.bind(tape, false);
        let ha = head.forward(tape, x)?;
        record_contrastive_loss(tape, he, ha, self.cfg.tau_cl, self.cfg.denominator_mode)
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint) {
        ck.add_mlp("head", &self.head.mlp, true);
        ck.add_adam("head_opt", &self.opt, true);
    }

    pub fn from_checkpoint(cfg: ClConfig, ck: &Checkpoint) -> Result<Self, ClError> {
        let mut c = Self::from_head(cfg, ProjectionHead { mlp: ck.mlp("head")? });
        ck.restore_adam("head_opt", &mut c.opt)?;
        Ok(c)
    }
}
