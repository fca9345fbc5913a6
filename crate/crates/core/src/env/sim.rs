use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::kinematics::{norm, solve_ik, sub, Vec3};
use super::reward::{cos_psi, RewardBreakdown};
use super::{Action, EnvError, Event, Observation, Task};

/// Full simulator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub task: Task,
    pub q: [f64; 6],
    pub wrist_pitch: f64,
    pub aperture: f64,
    pub nu_hand: Vec3,
    pub n_hand: Vec3,
    pub nu_object: Vec3,
    pub object_radius: f64,
    pub prev_dist_sq: f64,
    pub step_index: usize,
    pub terminal_event: Option<Event>,
    /// Cached target observation for the current object placement.
    pub target: Observation,
    /// Whether the inverse-kinematics solve behind `target` converged.
    pub target_converged: bool,
}

impl EnvState {
    pub fn observation(&self) -> Observation {
        Observation::build(&self.q, self.nu_hand, self.n_hand, self.nu_object, self.aperture)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub event: Event,
    pub done: bool,
}

/// Deterministic kinematic grasping simulator.
#[derive(Clone, Debug)]
pub struct GraspEnv {
    cfg: EnvConfig,
    state: Option<EnvState>,
}

impl GraspEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self { cfg, state: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_none_or(|s| s.terminal_event.is_some() || s.step_index >= self.cfg.max_steps)
    }

    /// Whether an object at `p` can be reached at all by the arm.
    pub fn reachable(&self, p: Vec3) -> bool {
        norm(sub(p, self.cfg.arm.base_position)) <= self.cfg.arm.reach()
    }

    pub fn reset(&mut self, seed: u64, task: Task) -> (EnvState, Observation) {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = cfg.home_q;
        if cfg.home_jitter > 0.0 {
            for v in q.iter_mut() {
                *v += rng.gen_range(-cfg.home_jitter..=cfg.home_jitter);
            }
        }
        cfg.arm.clamp_joints(&mut q);
        let wrist_pitch = cfg.arm.clamp_wrist(cfg.home_wrist);
        let params = *cfg.task(task);
        let region = cfg.object_region;
        let nu_object = loop {
            let x = sample(&mut rng, region.min[0], region.max[0]);
            let y = sample(&mut rng, region.min[1], region.max[1]);
            let p = [x, y, params.center_height];
            if self.reachable(p) {
                break p;
            }
        };
        let pose = cfg.arm.forward(&q, wrist_pitch);
        let mut state = EnvState {
            task,
            q,
            wrist_pitch,
            aperture: cfg.home_aperture.clamp(0.0, 1.0),
            nu_hand: pose.hand_center,
            n_hand: pose.hand_normal,
            nu_object,
            object_radius: params.object_radius,
            prev_dist_sq: 0.0,
            step_index: 0,
            terminal_event: None,
            target: Observation([0.0; 20]),
            target_converged: false,
        };
        let (target, converged) = target_state(cfg, &state);
        state.target = target;
        state.target_converged = converged;
        let obs = state.observation();
        state.prev_dist_sq = obs.squared_distance(&target);
        self.state = Some(state.clone());
        (state, obs)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if !action.is_finite() {
            return Err(EnvError::NonFiniteAction);
        }
        let max_steps = self.cfg.max_steps;
        let cfg = &self.cfg;
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if state.terminal_event.is_some() || state.step_index >= max_steps {
            return Err(EnvError::EpisodeDone);
        }
        let a = action.clamped().0;
        for j in 0..6 {
            state.q[j] += cfg.joint_step * a[j];
        }
        cfg.arm.clamp_joints(&mut state.q);
        state.wrist_pitch = cfg.arm.clamp_wrist(state.wrist_pitch + cfg.wrist_step * a[6]);
        state.aperture = (state.aperture + cfg.aperture_step * a[7]).clamp(0.0, 1.0);
        let pose = cfg.arm.forward(&state.q, state.wrist_pitch);
        state.nu_hand = pose.hand_center;
        state.n_hand = pose.hand_normal;

        let obs = state.observation();
        let dist_sq = obs.squared_distance(&state.target);
        let cos = cos_psi(state.n_hand, state.nu_object, state.nu_hand);
        let params = cfg.task(state.task);
        let dist = obs.dist();
        let success = dist <= params.object_radius + cfg.success_margin
            && cos >= cfg.reward.lambda_th
            && state.aperture >= params.aperture_band[0]
            && state.aperture <= params.aperture_band[1];
        let collision = || {
            !cfg.workspace.contains(pose.hand_center)
                || pose.link_samples(cfg.link_samples).iter().any(|p| p[2] < 0.0)
        };
        let event = if success {
            Event::Success
        } else if collision() {
            Event::Collision
        } else if dist <= params.object_radius + cfg.contact_margin {
            Event::Contact
        } else {
            Event::None
        };
        let reward = RewardBreakdown::compose(&cfg.reward, state.prev_dist_sq, dist_sq, event, cos);
        state.prev_dist_sq = dist_sq;
        state.step_index += 1;
        if event.is_terminal() {
            state.terminal_event = Some(event);
        }
        let done = state.terminal_event.is_some() || state.step_index >= max_steps;
        Ok(StepOutcome {
            observation: obs,
            reward,
            event,
            done,
        })
    }
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Target observation for the state's object: the hand hovering
/// `radius + grip_offset` above the object center, pointing straight down,
/// aperture at the middle of the grasp band, joints from an inverse-kinematics
/// solve started at the home pose. On solver failure the joint entries fall
/// back to the state's current joints; the second return value reports which.
pub fn target_state(cfg: &EnvConfig, state: &EnvState) -> (Observation, bool) {
    let params = cfg.task(state.task);
    let hand = [
        state.nu_object[0],
        state.nu_object[1],
        state.nu_object[2] + params.object_radius + cfg.grip_offset,
    ];
    let normal = [0.0, 0.0, -1.0];
    let (q, converged) = match solve_ik(&cfg.arm, hand, normal, cfg.home_q, cfg.home_wrist, &cfg.ik) {
        Ok(sol) => (sol.q, true),
        Err(sol) => {
            log::warn!(
                "target IK did not converge (residual {:.2e} m); using current joints",
                sol.position_residual
            );
            (state.q, false)
        }
    };
    (
        Observation::build(&q, hand, normal, state.nu_object, params.grasp_aperture()),
        converged,
    )
}
