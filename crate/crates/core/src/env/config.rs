use serde::{Deserialize, Serialize};

use super::kinematics::{ArmModel, IkConfig, Vec3};
use super::reward::RewardWeights;
use super::{EnvError, Task};

/// Per-object-category parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub object_radius: f64,
    /// Height of the object center above the table.
    pub center_height: f64,
    /// Apertures that count as a valid grasp, inclusive.
    pub aperture_band: [f64; 2],
}

impl TaskParams {
    /// Aperture the target state asks for: the middle of the band.
    pub fn grasp_aperture(&self) -> f64 {
        0.5 * (self.aperture_band[0] + self.aperture_band[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Scene configuration. Every field has a default; a JSON file only needs
/// the fields it overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub arm: ArmModel,
    pub home_q: [f64; 6],
    pub home_wrist: f64,
    pub home_aperture: f64,
    /// Uniform jitter applied to `home_q` on reset, radians.
    pub home_jitter: f64,
    pub ball: TaskParams,
    pub bottle: TaskParams,
    /// Success needs the hand within `radius + success_margin` of the object.
    pub success_margin: f64,
    /// Contact fires within `radius + contact_margin` when success does not.
    pub contact_margin: f64,
    /// Target hand height above the object center is `radius + grip_offset`.
    pub grip_offset: f64,
    /// Object centers are drawn uniformly in x/y from this box.
    pub object_region: Aabb,
    /// The hand leaving this box is a collision.
    pub workspace: Aabb,
    pub max_steps: usize,
    pub joint_step: f64,
    pub wrist_step: f64,
    pub aperture_step: f64,
    pub link_samples: usize,
    pub reward: RewardWeights,
    pub ik: IkConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            arm: ArmModel::default(),
            home_q: [0.0, 0.35, 0.75, 0.65, 0.3, 0.0],
            home_wrist: 1.0,
            home_aperture: 1.0,
            home_jitter: 0.05,
            ball: TaskParams {
                object_radius: 0.035,
                center_height: 0.035,
                aperture_band: [0.25, 0.55],
            },
            bottle: TaskParams {
                object_radius: 0.030,
                center_height: 0.10,
                aperture_band: [0.35, 0.65],
            },
            success_margin: 0.01,
            contact_margin: 0.03,
            grip_offset: -0.015,
            object_region: Aabb {
                min: [0.40, -0.15, 0.0],
                max: [0.60, 0.15, 0.0],
            },
            workspace: Aabb {
                min: [-0.3, -0.8, -1.0],
                max: [1.1, 0.8, 1.2],
            },
            max_steps: 100,
            joint_step: 0.05,
            wrist_step: 0.05,
            aperture_step: 0.1,
            link_samples: 4,
            reward: RewardWeights::default(),
            ik: IkConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn task(&self, task: Task) -> &TaskParams {
        match task {
            Task::Ball => &self.ball,
            Task::Bottle => &self.bottle,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.arm.validate().map_err(EnvError::Config)?;
        for (name, t) in [("ball", &self.ball), ("bottle", &self.bottle)] {
            if !(t.object_radius > 0.0) || !(t.aperture_band[0] <= t.aperture_band[1]) {
                return Err(EnvError::Config(format!("invalid {name} parameters")));
            }
        }
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        if !(self.contact_margin >= self.success_margin) {
            return Err(EnvError::Config("contact margin must not be below the success margin".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
