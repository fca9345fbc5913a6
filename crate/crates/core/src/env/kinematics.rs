//! Serial-chain kinematics for the arm-hand model.
//!
//! Joint 0 yaws the whole arm about the vertical axis through the base. Link 0
//! is a vertical column; joints 1–5 pitch links 1–5 inside the vertical plane
//! selected by the yaw, with elevation measured from vertical and accumulated
//! along the chain. The wrist pitch rotates the hand in the same plane, and the
//! hand center sits `palm_offset` beyond the last link along the hand normal.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// Arm geometry and joint ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmModel {
    pub link_lengths: [f64; 6],
    pub joint_limits: [[f64; 2]; 6],
    pub wrist_limits: [f64; 2],
    pub base_position: Vec3,
    pub palm_offset: f64,
}

impl Default for ArmModel {
    fn default() -> Self {
        use std::f64::consts::PI;
        let scale = [1.0, 0.75, 0.75, 1.0, 1.0, 1.0];
        Self {
            link_lengths: [0.30, 0.25, 0.20, 0.15, 0.10, 0.08],
            joint_limits: scale.map(|s| [-PI * s, PI * s]),
            wrist_limits: [-PI / 2.0, PI / 2.0],
            base_position: [0.0, 0.0, 0.0],
            palm_offset: 0.05,
        }
    }
}

impl ArmModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err("link lengths must be positive".into());
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) || !(self.wrist_limits[0] < self.wrist_limits[1]) {
            return Err("joint limits must satisfy lo < hi".into());
        }
        if !(self.palm_offset >= 0.0) {
            return Err("palm offset must be non-negative".into());
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn clamp_joints(&self, q: &mut [f64; 6]) {
        for (v, [lo, hi]) in q.iter_mut().zip(self.joint_limits) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn clamp_wrist(&self, w: f64) -> f64 {
        w.clamp(self.wrist_limits[0], self.wrist_limits[1])
    }

    pub fn forward(&self, q: &[f64; 6], wrist_pitch: f64) -> ArmPose {
        let (sy, cy) = q[0].sin_cos();
        let mut joints = [[0.0; 3]; 7];
        joints[0] = self.base_position;
        joints[1] = add(self.base_position, [0.0, 0.0, self.link_lengths[0]]);
        let mut elevation = 0.0;
        for k in 1..6 {
            elevation += q[k];
            let (s, c) = elevation.sin_cos();
            let l = self.link_lengths[k];
            joints[k + 1] = add(joints[k], [l * s * cy, l * s * sy, l * c]);
        }
        let (s, c) = (elevation + wrist_pitch).sin_cos();
        let hand_normal = normalize([s * cy, s * sy, c]);
        let hand_center = add(joints[6], scale(hand_normal, self.palm_offset));
        ArmPose {
            joints,
            hand_center,
            hand_normal,
        }
    }

    /// Hand center from joint angles and an already-known hand normal. This is
    /// what a client that only sees observations can evaluate.
    pub fn hand_center_from_normal(&self, q: &[f64; 6], hand_normal: Vec3) -> Vec3 {
        let tip = self.forward(q, 0.0).joints[6];
        add(tip, scale(hand_normal, self.palm_offset))
    }

    /// Wrist pitch implied by joint angles and an in-plane hand normal.
    pub fn wrist_from_normal(&self, q: &[f64; 6], hand_normal: Vec3) -> f64 {
        let along = hand_normal[0] * q[0].cos() + hand_normal[1] * q[0].sin();
        let phi = along.atan2(hand_normal[2]);
        let elevation: f64 = q[1..].iter().sum();
        wrap_angle(phi - elevation)
    }
}

/// Joint positions (base, top of the column, then the end of each pitched
/// link) plus the hand frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmPose {
    pub joints: [Vec3; 7],
    pub hand_center: Vec3,
    pub hand_normal: Vec3,
}

impl ArmPose {
    /// Points sampled along every link, endpoints included.
    pub fn link_samples(&self, per_link: usize) -> Vec<Vec3> {
        let per_link = per_link.max(2);
        let mut pts = Vec::with_capacity(6 * per_link + 1);
        for w in self.joints.windows(2) {
            for s in 0..per_link {
                let t = s as f64 / (per_link - 1) as f64;
                pts.push(lerp(w[0], w[1], t));
            }
        }
        pts.push(self.hand_center);
        pts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub max_iterations: usize,
    pub damping: f64,
    /// Metres of position error one unit of normal error is worth.
    pub normal_weight: f64,
    pub position_tolerance: f64,
    pub normal_tolerance: f64,
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            damping: 0.05,
            normal_weight: 0.2,
            position_tolerance: 1e-5,
            normal_tolerance: 1e-4,
            max_step: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution {
    pub q: [f64; 6],
    pub wrist_pitch: f64,
    pub position_residual: f64,
    pub normal_residual: f64,
    pub iterations: usize,
}

/// Damped-least-squares inverse kinematics for a hand position and normal,
/// over the six arm joints and the wrist pitch.
pub fn solve_ik(
    arm: &ArmModel,
    target_center: Vec3,
    target_normal: Vec3,
    q0: [f64; 6],
    wrist0: f64,
    cfg: &IkConfig,
) -> Result<IkSolution, IkSolution> {
    let target_normal = normalize(target_normal);
    let residual = |x: &[f64; 7]| -> SVector<f64, 6> {
        let q = [x[0], x[1], x[2], x[3], x[4], x[5]];
        let pose = arm.forward(&q, x[6]);
        let dp = sub(target_center, pose.hand_center);
        let dn = sub(target_normal, pose.hand_normal);
        SVector::<f64, 6>::from_column_slice(&[
            dp[0],
            dp[1],
            dp[2],
            cfg.normal_weight * dn[0],
            cfg.normal_weight * dn[1],
            cfg.normal_weight * dn[2],
        ])
    };
    let clamp = |x: &mut [f64; 7]| {
        for (j, v) in x.iter_mut().enumerate().take(6) {
            *v = v.clamp(arm.joint_limits[j][0], arm.joint_limits[j][1]);
        }
        x[6] = arm.clamp_wrist(x[6]);
    };
    let mut x = [q0[0], q0[1], q0[2], q0[3], q0[4], q0[5], wrist0];
    clamp(&mut x);
    let split = |x: &[f64; 7], e: &SVector<f64, 6>, iterations| IkSolution {
        q: [x[0], x[1], x[2], x[3], x[4], x[5]],
        wrist_pitch: x[6],
        position_residual: (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt(),
        normal_residual: (e[3] * e[3] + e[4] * e[4] + e[5] * e[5]).sqrt() / cfg.normal_weight,
        iterations,
    };
    let h = 1e-6;
    let lambda2 = cfg.damping * cfg.damping;
    for it in 0..cfg.max_iterations {
        let e = residual(&x);
        let sol = split(&x, &e, it);
        if sol.position_residual < cfg.position_tolerance && sol.normal_residual < cfg.normal_tolerance {
            return Ok(sol);
        }
        // residual = target − f(x), so ∂f/∂x = −∂residual/∂x
        let mut jac = SMatrix::<f64, 6, 7>::zeros();
        for j in 0..7 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let col = (residual(&xm) - residual(&xp)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let jjt = jac * jac.transpose() + SMatrix::<f64, 6, 6>::identity() * lambda2;
        let Some(y) = jjt.cholesky().map(|c| c.solve(&e)) else {
            break;
        };
        let mut dx = jac.transpose() * y;
        let biggest = dx.amax();
        if biggest > cfg.max_step {
            dx *= cfg.max_step / biggest;
        }
        for j in 0..7 {
            x[j] += dx[j];
        }
        clamp(&mut x);
    }
    let e = residual(&x);
    let sol = split(&x, &e, cfg.max_iterations);
    if sol.position_residual < 1e-3 && sol.normal_residual < 1e-2 {
        Ok(sol)
    } else {
        Err(sol)
    }
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    add(a, scale(sub(b, a), t))
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}
