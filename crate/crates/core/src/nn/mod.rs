//! Dense tensors, a reverse-mode gradient tape, MLPs, Adam and Polyak
//! averaging, sized for the 2×256 networks used throughout the crate.

mod checkpoint;
mod mlp;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use mlp::{Activation, BoundMlp, Linear, Mlp, MlpSpec};
pub use optim::{polyak_update, Adam, AdamConfig};
pub use tape::{logsumexp, sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::concat_cols;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
