use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::kinematics::Vec3;
use crate::env::{solve_ik, Action, EnvConfig, IkSolution, Observation, Task, ACT_DIM};

/// Inverse-kinematics servo that drives the hand to the grasp pose.
///
/// It only reads observations, so the same controller can drive the
/// simulator directly or act as a remote teleoperation client. Each step
/// moves every joint (and the wrist) along the straight joint-space line to
/// the IK solution, at the largest speed that keeps every component within
/// the action bounds, and steers the aperture to the middle of the grasp band.
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    cfg: EnvConfig,
    task: Task,
    noise_scale: f64,
    rng: ChaCha8Rng,
    cached: Option<(Vec3, IkSolution)>,
}

impl ScriptedExpert {
    pub fn new(cfg: EnvConfig, task: Task, noise_scale: f64, seed: u64) -> Self {
        Self {
            cfg,
            task,
            noise_scale,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cached: None,
        }
    }

    fn solution(&mut self, object: Vec3) -> &IkSolution {
        let fresh = !matches!(&self.cached, Some((o, _)) if *o == object);
        if fresh {
            let params = self.cfg.task(self.task);
            let hand = [
                object[0],
                object[1],
                object[2] + params.object_radius + self.cfg.grip_offset,
            ];
            let sol = match solve_ik(
                &self.cfg.arm,
                hand,
                [0.0, 0.0, -1.0],
                self.cfg.home_q,
                self.cfg.home_wrist,
                &self.cfg.ik,
            ) {
                Ok(s) | Err(s) => s,
            };
            self.cached = Some((object, sol));
        }
        &self.cached.as_ref().expect("just filled").1
    }

    /// Noise-free command for `obs`.
    pub fn clean_action(&mut self, obs: &Observation) -> Action {
        let q = obs.q();
        let wrist = self.cfg.arm.wrist_from_normal(&q, obs.normal());
        let (joint_step, wrist_step, ap_step) =
            (self.cfg.joint_step, self.cfg.wrist_step, self.cfg.aperture_step);
        let grasp_aperture = self.cfg.task(self.task).grasp_aperture();
        let sol = self.solution(obs.object()).clone();
        let mut a = [0.0; ACT_DIM];
        for j in 0..6 {
            a[j] = (sol.q[j] - q[j]) / joint_step;
        }
        a[6] = (sol.wrist_pitch - wrist) / wrist_step;
        let peak = a[..7].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            a[..7].iter_mut().for_each(|v| *v /= peak);
        }
        a[7] = ((grasp_aperture - obs.aperture()) / ap_step).clamp(-1.0, 1.0);
        Action(a)
    }

    pub fn act(&mut self, obs: &Observation) -> Action {
        let mut a = self.clean_action(obs);
        if self.noise_scale > 0.0 {
            for v in a.0.iter_mut() {
                *v += self.rng.gen_range(-self.noise_scale..=self.noise_scale);
            }
        }
        a.clamped()
    }
}
