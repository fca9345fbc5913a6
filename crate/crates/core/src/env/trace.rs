use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Action, Event, RewardBreakdown};

/// One line of a rollout trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward_breakdown: RewardBreakdown,
    pub event: Event,
    pub done: bool,
}

/// Writes rollout traces as JSON lines.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, rec: &TraceRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn step(
        &mut self,
        t: usize,
        obs: &[f64],
        action: &Action,
        reward: &RewardBreakdown,
        event: Event,
        done: bool,
    ) -> std::io::Result<()> {
        self.record(&TraceRecord {
            t,
            obs: obs.to_vec(),
            action: action.0.to_vec(),
            reward_breakdown: *reward,
            event,
            done,
        })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
