//! Two-phase dexterous grasping learner: behavior-cloning pretraining on
//! expert demonstrations, then soft actor-critic with a contrastive projection
//! head, trained against a kinematic arm-hand grasping simulator.

// `!(x > 0.0)` style checks are how NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod nn;
pub mod env;
pub mod demo;
pub mod sac;
pub mod bc;
pub mod contrastive;
pub mod harness;
