use std::f64::consts::{LN_2, PI};

use rand::Rng;

use crate::env::{ACT_DIM, OBS_DIM};
use crate::nn::{softplus, Activation, BoundMlp, Gradients, Linear, Mlp, NnError, Tape, Tensor, Var};

pub const HIDDEN: usize = 256;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Initial log-scale bias; the log-scale weights start at zero.
pub const LOG_STD_INIT: f64 = -1.0;

/// Squashed-Gaussian actor: `a = tanh(b(s) + δ(s)·ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    pub trunk: Mlp,
    pub mean_head: Mlp,
    pub log_std_head: Mlp,
}

/// Per-element `log N(u; b, δ²) − log(1 − tanh²u)` given `ε = (u − b)/δ`.
#[inline]
fn log_prob_elem(eps: f64, log_std: f64, u: f64) -> f64 {
    let base = -0.5 * eps * eps - 0.5 * (2.0 * PI).ln();
    let corr = -2.0 * (u + softplus(-2.0 * u)) + 2.0 * LN_2;
    base - log_std - corr
}

/// Log density of `action` under the squashed Gaussian with the given
/// pre-squash mean and log scale (one row, no clamping).
pub fn squashed_log_density(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let u = a.atanh();
            log_prob_elem((u - m) / ls.exp(), ls, u)
        })
        .sum()
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_sizes(OBS_DIM, &[HIDDEN, HIDDEN], ACT_DIM, rng)
    }

    pub fn with_sizes<R: Rng + ?Sized>(obs: usize, hidden: &[usize], act: usize, rng: &mut R) -> Self {
        let mut sizes = vec![obs];
        sizes.extend_from_slice(hidden);
        let feat = *sizes.last().expect("non-empty");
        let trunk = Mlp::new(&sizes, Activation::Relu, Activation::Relu, rng);
        let mean_head = Mlp::new(&[feat, act], Activation::Identity, Activation::Identity, rng);
        let log_std_head = Mlp::from_layers(
            vec![Linear::constant(feat, act, 0.0, LOG_STD_INIT)],
            Activation::Identity,
            Activation::Identity,
        )
        .expect("single layer");
        Self {
            trunk,
            mean_head,
            log_std_head,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean_head.out_dim()
    }

    /// Pre-squash mean and clamped log scale, `[B×8]` each.
    pub fn dist(&self, states: &Tensor) -> Result<(Tensor, Tensor), NnError> {
        let h = self.trunk.forward(states)?;
        let mean = self.mean_head.forward(&h)?;
        let log_std = self.log_std_head.forward(&h)?.map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok((mean, log_std))
    }

    /// Greedy action `tanh(b(s))`.
    pub fn mean_action(&self, states: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.dist(states)?.0.map(f64::tanh))
    }

    /// Reparameterized sample with noise `eps[B×8]`: actions and log-probs `[B]`.
    pub fn sample(&self, states: &Tensor, eps: &Tensor) -> Result<(Tensor, Tensor), NnError> {
        let (mean, log_std) = self.dist(states)?;
        if eps.shape() != mean.shape() {
            return Err(NnError::Shape {
                op: "policy sample",
                left: mean.shape().to_vec(),
                right: eps.shape().to_vec(),
            });
        }
        let (b, k) = (mean.rows(), mean.cols());
        let mut actions = Vec::with_capacity(b * k);
        let mut log_probs = Vec::with_capacity(b);
        for r in 0..b {
            let mut lp = 0.0;
            for c in 0..k {
                let (m, ls, e) = (mean.at(r, c), log_std.at(r, c), eps.at(r, c));
                let u = m + ls.exp() * e;
                actions.push(u.tanh());
                lp += log_prob_elem(e, ls, u);
            }
            log_probs.push(lp);
        }
        Ok((Tensor::new(vec![b, k], actions)?, Tensor::vector(log_probs)))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        p.extend(self.mean_head.params());
        p.extend(self.log_std_head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        p.extend(self.mean_head.params_mut());
        p.extend(self.log_std_head.params_mut());
        p
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut n = self.trunk.param_names(&format!("{prefix}.trunk"));
        n.extend(self.mean_head.param_names(&format!("{prefix}.mean")));
        n.extend(self.log_std_head.param_names(&format!("{prefix}.log_std")));
        n
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundPolicy {
        BoundPolicy {
            trunk: self.trunk.bind(tape, trainable),
            mean_head: self.mean_head.bind(tape, trainable),
            log_std_head: self.log_std_head.bind(tape, trainable),
        }
    }
}

/// A [`PolicyNet`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundPolicy {
    trunk: BoundMlp,
    mean_head: BoundMlp,
    log_std_head: BoundMlp,
}

impl BoundPolicy {
    pub fn dist(&self, tape: &mut Tape, states: Var) -> Result<(Var, Var), NnError> {
        let h = self.trunk.forward(tape, states)?;
        let mean = self.mean_head.forward(tape, h)?;
        let raw = self.log_std_head.forward(tape, h)?;
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        Ok((mean, log_std))
    }

    pub fn mean_action(&self, tape: &mut Tape, states: Var) -> Result<Var, NnError> {
        let (mean, _) = self.dist(tape, states)?;
        Ok(tape.tanh(mean))
    }

    /// Differentiable sample: actions `[B×8]` and log-probs `[B]`.
    pub fn sample(&self, tape: &mut Tape, states: Var, eps: &Tensor) -> Result<(Var, Var), NnError> {
        let (mean, log_std) = self.dist(tape, states)?;
        if tape.value(mean).shape() != eps.shape() {
            return Err(NnError::Shape {
                op: "policy sample",
                left: tape.value(mean).shape().to_vec(),
                right: eps.shape().to_vec(),
            });
        }
        let std = tape.exp(log_std);
        let e = tape.constant(eps.clone());
        let noise = tape.mul(std, e);
        let u = tape.add(mean, noise);
        let action = tape.tanh(u);

        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        let base = tape.constant(eps.map(|x| -0.5 * x * x - half_ln_2pi));
        let neg2u = tape.scale(u, -2.0);
        let sp = tape.softplus(neg2u);
        let u_sp = tape.add(u, sp);
        let corr = tape.scale(u_sp, -2.0);
        let corr = tape.add_scalar(corr, 2.0 * LN_2);
        let centered = tape.sub(base, log_std);
        let elem = tape.sub(centered, corr);
        let log_prob = tape.sum_cols(elem);
        Ok((action, log_prob))
    }

    /// Gradients aligned with [`PolicyNet::params`].
    pub fn grads(&self, g: &Gradients) -> Vec<Tensor> {
        let mut out = self.trunk.grads(g);
        out.extend(self.mean_head.grads(g));
        out.extend(self.log_std_head.grads(g));
        out
    }
}
