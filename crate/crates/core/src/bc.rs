//! Behavior-cloning pretraining of the actor's deterministic path.
//!
//! The loss is `E[|tanh(b(s)) - a_E|^2]`: squared error summed over action
//! components, averaged over batch rows. Only the trunk and mean head are
//! optimized; the log-scale head keeps its initialization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demo::DemoSet;
use crate::nn::{Adam, AdamConfig, NnError, Tape, Tensor};
use crate::sac::PolicyNet;

#[derive(Debug, thiserror::Error)]
pub enum BcError {
    #[error("non-finite BC loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("behavior cloning needs at least {needed} demonstration pairs, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error("actor outputs {got} action components, demonstrations have {want}")]
    Arity { want: usize, got: usize },
    #[error("invalid BC configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training stops once the epoch's training loss is at or below this.
    pub target_mse: f64,
    pub validation_fraction: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            batch_size: 512,
            learning_rate: 7.3e-4,
            target_mse: 1e-3,
            validation_fraction: 0.1,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<(), BcError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.target_mse > 0.0) {
            return Err(BcError::Config("epochs, batch size, learning rate and target must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(BcError::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcEpoch {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches.
    pub train_loss: f64,
    /// Loss on the held-out pairs, `None` without a validation split.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub history: Vec<BcEpoch>,
    pub stopped_early: bool,
    pub train_pairs: usize,
    pub val_pairs: usize,
}

impl BcReport {
    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map_or(self.initial_train_loss, |e| e.train_loss)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.history.last().map_or(self.initial_val_loss, |e| e.val_loss)
    }
}

/// Mean over rows of the squared distance between `tanh(b(s))` and `a`,
/// without gradients.
pub fn bc_loss(actor: &PolicyNet, states: &Tensor, actions: &Tensor) -> Result<f64, NnError> {
    let pred = actor.mean_action(states)?;
    if pred.shape() != actions.shape() {
        return Err(NnError::Shape {
            op: "bc loss",
            left: pred.shape().to_vec(),
            right: actions.shape().to_vec(),
        });
    }
    let sq: f64 = pred.data().iter().zip(actions.data()).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sq / pred.len() as f64 * pred.cols() as f64)
}

/// Loss and gradients for the trunk and mean-head parameters, in that order.
pub fn bc_loss_grad(actor: &PolicyNet, states: &Tensor, actions: &Tensor) -> Result<(f64, Vec<Tensor>), NnError> {
    let mut tape = Tape::new();
    let trunk = actor.trunk.bind(&mut tape, true);
    let head = actor.mean_head.bind(&mut tape, true);
    let s = tape.constant(states.clone());
    let h = trunk.forward(&mut tape, s)?;
    let m = head.forward(&mut tape, h)?;
    let pred = tape.tanh(m);
    if tape.value(pred).shape() != actions.shape() {
        return Err(NnError::Shape {
            op: "bc loss",
            left: tape.value(pred).shape().to_vec(),
            right: actions.shape().to_vec(),
        });
    }
    let target = tape.constant(actions.clone());
    let diff = tape.sub(pred, target);
    let sq = tape.square(diff);
    let per_element = tape.mean(sq);
    let loss = tape.scale(per_element, actions.cols() as f64);
    let g = tape.backward(loss)?;
    let mut grads = trunk.grads(&g);
    grads.extend(head.grads(&g));
    Ok((tape.value(loss).item(), grads))
}

/// Regresses the actor's squashed mean onto the demonstrations.
pub fn pretrain(actor: &mut PolicyNet, demos: &DemoSet, cfg: &BcConfig, seed: u64) -> Result<BcReport, BcError> {
    cfg.validate()?;
    if actor.act_dim() != crate::env::ACT_DIM {
        return Err(BcError::Arity {
            want: crate::env::ACT_DIM,
            got: actor.act_dim(),
        });
    }
    let n = demos.num_pairs();
    if n == 0 {
        return Err(BcError::TooFewPairs { needed: 1, found: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val = (n_val > 0).then(|| demos.gather(val_idx));
    let (train_s, train_a) = demos.gather(&train_idx);

    let names = {
        let mut v = actor.trunk.param_names("actor.trunk");
        v.extend(actor.mean_head.param_names("actor.mean"));
        v
    };
    let mut params: Vec<&Tensor> = actor.trunk.params();
    params.extend(actor.mean_head.params());
    let mut opt = Adam::for_params(AdamConfig::with_lr(cfg.learning_rate), names, &params);

    let val_loss = |a: &PolicyNet| -> Result<Option<f64>, NnError> {
        val.as_ref().map(|(s, act)| bc_loss(a, s, act)).transpose()
    };
    let initial_train_loss = bc_loss(actor, &train_s, &train_a)?;
    let initial_val_loss = val_loss(actor)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            let (s, a) = demos.gather(chunk);
            let (loss, grads) = bc_loss_grad(actor, &s, &a)?;
            if !loss.is_finite() {
                return Err(BcError::NonFinite { epoch, batch: b });
            }
            let mut p = actor.trunk.params_mut();
            p.extend(actor.mean_head.params_mut());
            opt.step(&mut p, &grads).map_err(|e| match e {
                NnError::NonFinite { .. } => BcError::NonFinite { epoch, batch: b },
                other => other.into(),
            })?;
            total += loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        history.push(BcEpoch {
            epoch,
            train_loss,
            val_loss: val_loss(actor)?,
        });
        log::debug!("bc epoch {epoch}: train {train_loss:.3e}");
        if train_loss <= cfg.target_mse {
            stopped_early = true;
            break;
        }
    }
    Ok(BcReport {
        initial_train_loss,
        initial_val_loss,
        history,
        stopped_early,
        train_pairs: train_idx.len(),
        val_pairs: n_val,
    })
}
