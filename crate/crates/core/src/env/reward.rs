//! Entropy-augmented task reward: distance, motion smoothness, events and
//! hand-pose alignment.

use serde::{Deserialize, Serialize};

use super::kinematics::{dot, norm, sub, Vec3};
use super::Event;

/// Reward weights and constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Motion-smoothness weight ξ₁.
    pub xi1: f64,
    /// Event weight ξ₂.
    pub xi2: f64,
    /// Pose weight ξ₃.
    pub xi3: f64,
    /// Success bonus Z₁.
    pub z1: f64,
    /// Collision penalty Z₂.
    pub z2: f64,
    /// Contact penalty Z₃.
    pub z3: f64,
    /// Slope below the alignment threshold, Z₄.
    pub z4: f64,
    /// Slope above the alignment threshold, Z₅.
    pub z5: f64,
    /// Alignment threshold Λ_th.
    pub lambda_th: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            xi1: 1000.0,
            xi2: 1.0,
            xi3: 1.0,
            z1: 1000.0,
            z2: 100.0,
            z3: 60.0,
            z4: 7.0,
            z5: 80.0,
            lambda_th: 0.75,
        }
    }
}

/// Per-step decomposition of the reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub distance_term: f64,
    pub smooth_term: f64,
    pub event_term: f64,
    pub pose_term: f64,
    pub total: f64,
    pub cos_psi: f64,
}

impl RewardBreakdown {
    /// Assembles the four terms. `total` is their left-to-right sum.
    pub fn compose(
        w: &RewardWeights,
        prev_dist_sq: f64,
        dist_sq: f64,
        event: Event,
        cos_psi: f64,
    ) -> Self {
        let distance_term = -dist_sq;
        let smooth_term = w.xi1 * smooth_reward(prev_dist_sq, dist_sq);
        let event_term = w.xi2 * event_reward(w, event);
        let pose_term = w.xi3 * pose_reward(w, cos_psi);
        Self {
            distance_term,
            smooth_term,
            event_term,
            pose_term,
            total: distance_term + smooth_term + event_term + pose_term,
            cos_psi,
        }
    }
}

/// Cosine between the hand normal and the hand-to-object displacement.
/// Returns 1 when the hand sits on the object center.
pub fn cos_psi(n_hand: Vec3, nu_object: Vec3, nu_hand: Vec3) -> f64 {
    let rel = sub(nu_object, nu_hand);
    let rn = norm(rel);
    if rn < 1e-9 {
        return 1.0;
    }
    (dot(n_hand, rel) / (norm(n_hand) * rn)).clamp(-1.0, 1.0)
}

/// Piecewise-linear alignment reward with a steeper slope above the threshold.
pub fn pose_reward(w: &RewardWeights, cos_psi: f64) -> f64 {
    let excess = cos_psi - w.lambda_th;
    if cos_psi <= w.lambda_th {
        w.z4 * excess
    } else {
        w.z5 * excess
    }
}

pub fn event_reward(w: &RewardWeights, event: Event) -> f64 {
    match event {
        Event::Success => w.z1,
        Event::Collision => -w.z2,
        Event::Contact => -w.z3,
        Event::None => 0.0,
    }
}

/// Decrease of the squared distance to the target since the previous step.
pub fn smooth_reward(prev_dist_sq: f64, dist_sq: f64) -> f64 {
    prev_dist_sq - dist_sq
}
