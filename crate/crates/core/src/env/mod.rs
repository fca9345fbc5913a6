//! Kinematic arm-hand grasping simulator with the event-driven reward.

mod config;
pub mod kinematics;
pub mod reward;
mod sim;
mod trace;
mod types;

pub use config::{Aabb, EnvConfig, TaskParams};
pub use kinematics::{solve_ik, ArmModel, ArmPose, IkConfig, IkSolution};
pub use reward::{cos_psi, event_reward, pose_reward, smooth_reward, RewardBreakdown, RewardWeights};
pub use sim::{target_state, EnvState, GraspEnv, StepOutcome};
pub use trace::{TraceRecord, TraceWriter};
pub use types::{Action, Event, Observation, Task, ACT_DIM, OBS_DIM};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("action contains non-finite components")]
    NonFiniteAction,
    #[error("{what} has {got} elements, expected {expected}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid scene configuration: {0}")]
    Config(String),
}
