use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bc::BcConfig;
use crate::contrastive::ClConfig;
use crate::env::{EnvConfig, Task};
use crate::sac::SacConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Soft actor-critic from scratch.
    Sac,
    /// Behavior-cloning pretraining, then SAC.
    BcSac,
    /// Pretraining, then SAC with the contrastive term.
    BcSacCl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sac, Method::BcSac, Method::BcSacCl];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sac => "sac",
            Method::BcSac => "bc_sac",
            Method::BcSacCl => "bc_sac_cl",
        }
    }

    pub fn pretrains(self) -> bool {
        self != Method::Sac
    }

    pub fn uses_contrastive(self) -> bool {
        self == Method::BcSacCl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method `{s}` (sac, bc_sac, bc_sac_cl)")))
    }
}

/// Everything a training run needs. Every field has a default, so a JSON
/// config only lists what it overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub method: Method,
    pub total_iterations: usize,
    pub steps_per_iteration: usize,
    pub eval_episodes: usize,
    /// Evaluation episode `k` resets the env with seed `eval_seed + k`.
    pub eval_seed: u64,
    /// Demonstration file, required by the pretraining methods.
    pub demos: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Also write `iter_NNNN.ckpt` every this many iterations.
    pub checkpoint_every: Option<usize>,
    /// First iteration whose evaluation reaches this success rate counts as converged.
    pub success_threshold: f64,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub bc: BcConfig,
    pub contrastive: ClConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Ball,
            seed: 0,
            method: Method::BcSacCl,
            total_iterations: 50,
            steps_per_iteration: 2000,
            eval_episodes: 100,
            eval_seed: 1_000_000,
            demos: None,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: None,
            success_threshold: 0.8,
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            bc: BcConfig::default(),
            contrastive: ClConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        self.sac.validate()?;
        self.bc.validate()?;
        self.contrastive.validate()?;
        if self.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be positive".into()));
        }
        if self.steps_per_iteration == 0 && self.total_iterations > 0 {
            return Err(HarnessError::Config("steps_per_iteration must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(HarnessError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
