use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const METRICS_HEADER: &str = "iter,env_steps,mean_reward,success_rate,L_q1,L_q2,L_pi,L_cl,entropy_estimate";

/// One evaluation row. Loss columns average the iteration's gradient
/// updates and are empty when there were none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub loss_q1: Option<f64>,
    pub loss_q2: Option<f64>,
    pub loss_pi: Option<f64>,
    pub loss_cl: Option<f64>,
    pub entropy: Option<f64>,
    /// Kept out of `metrics.csv` so that file is reproducible.
    pub wall_seconds: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn parse_cell(s: &str, line: usize, col: &str) -> Result<Option<f64>, HarnessError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| HarnessError::Metrics(format!("line {line}, {col}: {e}")))
}

impl IterationMetrics {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{},{},{},{},{}",
            self.iter,
            self.env_steps,
            self.mean_reward,
            self.success_rate,
            cell(self.loss_q1),
            cell(self.loss_q2),
            cell(self.loss_pi),
            cell(self.loss_cl),
            cell(self.entropy)
        )
    }

    fn from_csv_row(row: &str, line: usize) -> Result<Self, HarnessError> {
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 9 {
            return Err(HarnessError::Metrics(format!("line {line}: expected 9 columns, found {}", f.len())));
        }
        let int = |s: &str, col: &str| {
            s.parse::<u64>()
                .map_err(|e| HarnessError::Metrics(format!("line {line}, {col}: {e}")))
        };
        let req = |s: &str, col: &str| {
            parse_cell(s, line, col)?.ok_or_else(|| HarnessError::Metrics(format!("line {line}: {col} is empty")))
        };
        Ok(Self {
            iter: int(f[0], "iter")? as usize,
            env_steps: int(f[1], "env_steps")?,
            mean_reward: req(f[2], "mean_reward")?,
            success_rate: req(f[3], "success_rate")?,
            loss_q1: parse_cell(f[4], line, "L_q1")?,
            loss_q2: parse_cell(f[5], line, "L_q2")?,
            loss_pi: parse_cell(f[6], line, "L_pi")?,
            loss_cl: parse_cell(f[7], line, "L_cl")?,
            entropy: parse_cell(f[8], line, "entropy_estimate")?,
            wall_seconds: 0.0,
        })
    }
}

pub fn metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn timing_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from("iter,wall_seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3}", r.iter, r.wall_seconds);
    }
    out
}

/// Parses `metrics.csv` text. Wall time is not stored there and reads as zero.
pub fn parse_metrics(text: &str) -> Result<Vec<IterationMetrics>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(HarnessError::Metrics(format!("unexpected header {other:?}")));
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| IterationMetrics::from_csv_row(l, i + 2))
        .collect()
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<IterationMetrics>, HarnessError> {
    parse_metrics(&fs::read_to_string(path)?)
}

/// First iteration whose success rate reaches `threshold`.
pub fn iterations_to_threshold(rows: &[IterationMetrics], threshold: f64) -> Option<usize> {
    rows.iter().find(|r| r.success_rate >= threshold).map(|r| r.iter)
}
