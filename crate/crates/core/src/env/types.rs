use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kinematics::{norm, sub, Vec3};
use super::EnvError;

pub const OBS_DIM: usize = 20;
pub const ACT_DIM: usize = 8;

/// Object category being grasped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ball,
    Bottle,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ball => "ball",
            Task::Bottle => "bottle",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ball" => Ok(Task::Ball),
            "bottle" => Ok(Task::Bottle),
            other => Err(format!("unknown task `{other}` (expected ball or bottle)")),
        }
    }
}

/// Discrete outcome of a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    #[default]
    None,
    Success,
    Collision,
    Contact,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::None => "none",
            Event::Success => "success",
            Event::Collision => "collision",
            Event::Contact => "contact",
        }
    }

    /// Events that end the episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, Event::Success | Event::Collision)
    }
}

impl FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Event::None),
            "success" => Ok(Event::Success),
            "collision" => Ok(Event::Collision),
            "contact" => Ok(Event::Contact),
            other => Err(format!("unknown event `{other}`")),
        }
    }
}

/// Policy input. Layout: `q[0..6]`, hand center `[6..9]`, hand normal
/// `[9..12]`, object center `[12..15]`, object minus hand `[15..18]`,
/// aperture `[18]`, hand-object distance `[19]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn build(q: &[f64; 6], hand: Vec3, normal: Vec3, object: Vec3, aperture: f64) -> Self {
        let rel = sub(object, hand);
        let mut o = [0.0; OBS_DIM];
        o[0..6].copy_from_slice(q);
        o[6..9].copy_from_slice(&hand);
        o[9..12].copy_from_slice(&normal);
        o[12..15].copy_from_slice(&object);
        o[15..18].copy_from_slice(&rel);
        o[18] = aperture;
        o[19] = norm(rel);
        Self(o)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, EnvError> {
        let arr: [f64; OBS_DIM] = v.try_into().map_err(|_| EnvError::Arity {
            what: "observation",
            expected: OBS_DIM,
            got: v.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn q(&self) -> [f64; 6] {
        self.0[0..6].try_into().expect("6")
    }

    pub fn hand(&self) -> Vec3 {
        self.0[6..9].try_into().expect("3")
    }

    pub fn normal(&self) -> Vec3 {
        self.0[9..12].try_into().expect("3")
    }

    pub fn object(&self) -> Vec3 {
        self.0[12..15].try_into().expect("3")
    }

    pub fn rel(&self) -> Vec3 {
        self.0[15..18].try_into().expect("3")
    }

    pub fn aperture(&self) -> f64 {
        self.0[18]
    }

    pub fn dist(&self) -> f64 {
        self.0[19]
    }

    pub fn squared_distance(&self, other: &Observation) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Normalized command. Layout: joint deltas `[0..6]`, wrist pitch delta `[6]`,
/// aperture delta `[7]`, each in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action(pub [f64; ACT_DIM]);

impl Action {
    pub fn zeros() -> Self {
        Self([0.0; ACT_DIM])
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, EnvError> {
        let arr: [f64; ACT_DIM] = v.try_into().map_err(|_| EnvError::Arity {
            what: "action",
            expected: ACT_DIM,
            got: v.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn clamped(&self) -> Self {
        Self(self.0.map(|v| v.clamp(-1.0, 1.0)))
    }
}
