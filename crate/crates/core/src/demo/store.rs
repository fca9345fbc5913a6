//! Demonstration trajectories and their JSON-lines file format.
//!
//! Line 1 is a header:
//! `{"version":1,"task":…,"obs_dim":20,"act_dim":8,"source":…,"trajectories":[…]}`
//! where `trajectories` lists each trajectory's seed, source, creation time
//! and step count in file order. Every following line is one step:
//! `{"t":…,"obs":[20],"act":[8],"r":…,"event":…,"done":…}`. Floats are written
//! with 17 significant digits so that every value reloads bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DemoError;
use crate::env::{Action, Event, Observation, Task, ACT_DIM, OBS_DIM};
use crate::nn::Tensor;

const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Scripted,
    Teleop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoStep {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub event: Event,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub task: Task,
    pub seed: u64,
    pub steps: Vec<DemoStep>,
    pub source: Source,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), DemoError> {
        if self.steps.is_empty() {
            return Err(DemoError::Invalid("empty trajectory".into()));
        }
        let last = self.steps.len() - 1;
        for (i, s) in self.steps.iter().enumerate() {
            if s.done != (i == last) {
                return Err(DemoError::Invalid(format!(
                    "step {i}: done must be set on the last step only"
                )));
            }
        }
        Ok(())
    }

    pub fn succeeded(&self) -> bool {
        self.steps.last().is_some_and(|s| s.event == Event::Success)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Expert demonstrations plus a flat index over every `(state, action)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    task: Task,
    trajectories: Vec<Trajectory>,
    index: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    seed: u64,
    source: Source,
    created_at: u64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    version: u32,
    task: Task,
    obs_dim: usize,
    act_dim: usize,
    source: String,
    trajectories: Vec<TrajectoryHeader>,
}

#[derive(Deserialize)]
struct StepRecord {
    t: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    r: f64,
    event: Event,
    done: bool,
}

impl DemoSet {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            trajectories: Vec::new(),
            index: Vec::new(),
        }
    }

    pub fn from_trajectories(task: Task, trajectories: Vec<Trajectory>) -> Result<Self, DemoError> {
        let mut set = Self::new(task);
        for t in trajectories {
            set.push(t)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, traj: Trajectory) -> Result<(), DemoError> {
        traj.validate()?;
        if traj.task != self.task {
            return Err(DemoError::Invalid(format!(
                "trajectory task {} does not match set task {}",
                traj.task, self.task
            )));
        }
        let ti = self.trajectories.len();
        self.index.extend((0..traj.len()).map(|si| (ti, si)));
        self.trajectories.push(traj);
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn num_pairs(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn pair(&self, i: usize) -> (&Observation, &Action) {
        let (t, s) = self.index[i];
        let step = &self.trajectories[t].steps[s];
        (&step.obs, &step.action)
    }

    /// Stacks the listed pairs into `[n×20]` states and `[n×8]` actions.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let mut s = Vec::with_capacity(indices.len() * OBS_DIM);
        let mut a = Vec::with_capacity(indices.len() * ACT_DIM);
        for &i in indices {
            let (o, act) = self.pair(i);
            s.extend_from_slice(&o.0);
            a.extend_from_slice(&act.0);
        }
        (
            Tensor::new(vec![indices.len(), OBS_DIM], s).expect("shape"),
            Tensor::new(vec![indices.len(), ACT_DIM], a).expect("shape"),
        )
    }

    /// `batch_size` pairs drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<(Tensor, Tensor), DemoError> {
        if self.is_empty() {
            return Err(DemoError::Empty);
        }
        let idx: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..self.num_pairs())).collect();
        Ok(self.gather(&idx))
    }

    pub fn to_jsonl(&self) -> Result<String, DemoError> {
        let source = match self.trajectories.first().map(|t| t.source) {
            Some(first) if self.trajectories.iter().any(|t| t.source != first) => "mixed".to_string(),
            Some(Source::Teleop) => "teleop".to_string(),
            _ => "scripted".to_string(),
        };
        let header = FileHeader {
            version: VERSION,
            task: self.task,
            obs_dim: OBS_DIM,
            act_dim: ACT_DIM,
            source,
            trajectories: self
                .trajectories
                .iter()
                .map(|t| TrajectoryHeader {
                    seed: t.seed,
                    source: t.source,
                    created_at: t.created_at,
                    steps: t.len(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string(&header).map_err(|e| DemoError::Invalid(e.to_string()))?;
        out.push('\n');
        for traj in &self.trajectories {
            for (t, step) in traj.steps.iter().enumerate() {
                let _ = write!(out, "{{\"t\":{t},\"obs\":");
                write_floats(&mut out, &step.obs.0)?;
                out.push_str(",\"act\":");
                write_floats(&mut out, &step.action.0)?;
                out.push_str(",\"r\":");
                write_float(&mut out, step.reward)?;
                let _ = writeln!(
                    out,
                    ",\"event\":\"{}\",\"done\":{}}}",
                    step.event.as_str(),
                    step.done
                );
            }
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DemoError> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or(DemoError::Record {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header: FileHeader = serde_json::from_str(header_line).map_err(|e| DemoError::Record {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
        if header.version != VERSION {
            return Err(DemoError::Record {
                line: 1,
                msg: format!("unknown version {}", header.version),
            });
        }
        if header.obs_dim != OBS_DIM || header.act_dim != ACT_DIM {
            return Err(DemoError::Record {
                line: 1,
                msg: format!(
                    "dimensions {}/{} do not match {OBS_DIM}/{ACT_DIM}",
                    header.obs_dim, header.act_dim
                ),
            });
        }
        let mut set = Self::new(header.task);
        let mut line_no = 1;
        for th in &header.trajectories {
            let mut steps = Vec::with_capacity(th.steps);
            for t in 0..th.steps {
                line_no += 1;
                let err = |msg: String| DemoError::Record { line: line_no, msg };
                let line = lines.next().ok_or_else(|| err("file truncated".into()))?;
                let rec: StepRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
                if rec.t != t {
                    return Err(err(format!("expected t = {t}, found {}", rec.t)));
                }
                let obs = Observation::from_slice(&rec.obs).map_err(|e| err(e.to_string()))?;
                let action = Action::from_slice(&rec.act).map_err(|e| err(e.to_string()))?;
                steps.push(DemoStep {
                    obs,
                    action,
                    reward: rec.r,
                    event: rec.event,
                    done: rec.done,
                });
            }
            let traj = Trajectory {
                task: header.task,
                seed: th.seed,
                steps,
                source: th.source,
                created_at: th.created_at,
            };
            set.push(traj).map_err(|e| DemoError::Record {
                line: line_no,
                msg: e.to_string(),
            })?;
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(DemoError::Record {
                line: line_no + 1,
                msg: format!("unexpected record after last trajectory: {extra:.40}"),
            });
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DemoError> {
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DemoError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

fn write_float(out: &mut String, v: f64) -> Result<(), DemoError> {
    if !v.is_finite() {
        return Err(DemoError::Invalid(format!("cannot store non-finite value {v}")));
    }
    let _ = write!(out, "{v:.16e}");
    Ok(())
}

fn write_floats(out: &mut String, vs: &[f64]) -> Result<(), DemoError> {
    out.push('[');
    for (i, &v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_float(out, v)?;
    }
    out.push(']');
    Ok(())
}
