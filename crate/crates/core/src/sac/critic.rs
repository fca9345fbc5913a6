use rand::Rng;

use super::policy::HIDDEN;
use crate::env::{ACT_DIM, OBS_DIM};
use crate::nn::{concat_cols, Activation, BoundMlp, Mlp, NnError, Tape, Tensor, Var};

/// State-action value network over `state ⊕ action`.
#[derive(Clone, Debug, PartialEq)]
pub struct QNet {
    pub mlp: Mlp,
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_sizes(OBS_DIM, ACT_DIM, &[HIDDEN, HIDDEN], rng)
    }

    pub fn with_sizes<R: Rng + ?Sized>(obs: usize, act: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs + act];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            mlp: Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng),
        }
    }

    /// Values `[B]`.
    pub fn forward(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor, NnError> {
        if states.rows() != actions.rows() {
            return Err(NnError::Shape {
                op: "q forward",
                left: states.shape().to_vec(),
                right: actions.shape().to_vec(),
            });
        }
        let out = self.mlp.forward(&concat_cols(states, actions))?;
        out.reshape(vec![states.rows()])
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundQ {
        BoundQ {
            mlp: self.mlp.bind(tape, trainable),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundQ {
    pub mlp: BoundMlp,
}

impl BoundQ {
    /// Values `[B]`.
    pub fn forward(&self, tape: &mut Tape, states: Var, actions: Var) -> Result<Var, NnError> {
        let (bs, ba) = (tape.value(states).rows(), tape.value(actions).rows());
        if bs != ba {
            return Err(NnError::Shape {
                op: "q forward",
                left: tape.value(states).shape().to_vec(),
                right: tape.value(actions).shape().to_vec(),
            });
        }
        let x = tape.concat_cols(states, actions);
        let q = self.mlp.forward(tape, x)?;
        Ok(tape.reshape(q, vec![bs]))
    }
}
