use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::metrics::{iterations_to_threshold, IterationMetrics};
use super::train::{load_demos, train_with_demos};
use super::{HarnessError, Method, RunConfig};

pub const MIN_SEEDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_success_rate: f64,
    pub final_mean_reward: f64,
    pub iterations_to_threshold: Option<usize>,
    pub curve: Vec<(usize, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: Vec<SeedResult>,
    pub failures: Vec<(u64, String)>,
    pub median_success_rate: Option<f64>,
    pub median_mean_reward: Option<f64>,
    /// Median over seeds, where a run that never reached the threshold
    /// counts as later than any run that did. `None` if that median run
    /// never reached it.
    pub median_iterations_to_threshold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub success_threshold: f64,
    pub methods: Vec<MethodSummary>,
    pub warnings: Vec<String>,
    pub output_dir: PathBuf,
}

impl AblationReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Lower median for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

fn median_iterations(runs: &[SeedResult]) -> Option<usize> {
    if runs.is_empty() {
        return None;
    }
    let mut v: Vec<usize> = runs
        .iter()
        .map(|r| r.iterations_to_threshold.unwrap_or(usize::MAX))
        .collect();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2]).filter(|&x| x != usize::MAX)
}

fn seed_result(seed: u64, rows: &[IterationMetrics], threshold: f64) -> SeedResult {
    let last = rows.last().expect("runs evaluate iteration 0");
    SeedResult {
        seed,
        final_success_rate: last.success_rate,
        final_mean_reward: last.mean_reward,
        iterations_to_threshold: iterations_to_threshold(rows, threshold),
        curve: rows.iter().map(|r| (r.iter, r.mean_reward, r.success_rate)).collect(),
    }
}

/// Runs every method in `methods` for every seed under
/// `base.output_dir/<method>/seed_<n>`, then writes `curves.csv`,
/// `curves.svg`, `report.json` and `report.md` to `base.output_dir`.
/// A failed run is recorded in the report rather than aborting the rest.
pub fn ablation(base: &RunConfig, seeds: &[u64], methods: &[Method]) -> Result<AblationReport, HarnessError> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(HarnessError::Config("ablation needs at least one seed and one method".into()));
    }
    let mut warnings = Vec::new();
    if seeds.len() < MIN_SEEDS {
        warnings.push(format!(
            "only {} seed(s); medians over fewer than {MIN_SEEDS} seeds are not meaningful",
            seeds.len()
        ));
    }
    let needs_demos = methods.iter().any(|m| m.pretrains());
    let demos = if needs_demos {
        let probe = RunConfig {
            method: Method::BcSac,
            ..base.clone()
        };
        load_demos(&probe)?
    } else {
        None
    };
    fs::create_dir_all(&base.output_dir)?;

    let mut summaries = Vec::new();
    for &method in methods {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for &seed in seeds {
            let cfg = RunConfig {
                method,
                seed,
                output_dir: base.output_dir.join(method.as_str()).join(format!("seed_{seed}")),
                ..base.clone()
            };
            match train_with_demos(&cfg, demos.as_ref()) {
                Ok(out) => runs.push(seed_result(seed, &out.metrics, base.success_threshold)),
                Err(e) => {
                    log::error!("{method} seed {seed} failed: {e}");
                    failures.push((seed, e.to_string()));
                }
            }
        }
        if !failures.is_empty() {
            warnings.push(format!("{method}: {} of {} runs failed", failures.len(), seeds.len()));
        }
        let successes: Vec<f64> = runs.iter().map(|r| r.final_success_rate).collect();
        let rewards: Vec<f64> = runs.iter().map(|r| r.final_mean_reward).collect();
        summaries.push(MethodSummary {
            method,
            median_success_rate: median(&successes),
            median_mean_reward: median(&rewards),
            median_iterations_to_threshold: median_iterations(&runs),
            runs,
            failures,
        });
    }
    let report = AblationReport {
        seeds: seeds.to_vec(),
        success_threshold: base.success_threshold,
        methods: summaries,
        warnings,
        output_dir: base.output_dir.clone(),
    };
    fs::write(base.output_dir.join("curves.csv"), curves_csv(&report))?;
    fs::write(base.output_dir.join("curves.svg"), curves_svg(&report))?;
    fs::write(base.output_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(base.output_dir.join("report.md"), report_markdown(&report))?;
    Ok(report)
}

pub fn curves_csv(report: &AblationReport) -> String {
    let mut out = String::from("method,seed,iter,mean_reward,success_rate\n");
    for m in &report.methods {
        for r in &m.runs {
            for &(iter, reward, success) in &r.curve {
                let _ = writeln!(out, "{},{},{iter},{reward:?},{success:?}", m.method, r.seed);
            }
        }
    }
    out
}

pub fn report_markdown(report: &AblationReport) -> String {
    let fmt = |v: Option<f64>, pct: bool| match v {
        Some(x) if pct => format!("{:.1}%", 100.0 * x),
        Some(x) => format!("{x:.2}"),
        None => "n/a".into(),
    };
    let mut out = String::from("# Ablation\n\n");
    let _ = writeln!(out, "Seeds: {:?}\n", report.seeds);
    let _ = writeln!(
        out,
        "| method | median success | median reward | median iterations to {:.0}% | failed runs |",
        100.0 * report.success_threshold
    );
    out.push_str("|---|---|---|---|---|\n");
    for m in &report.methods {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            m.method,
            fmt(m.median_success_rate, true),
            fmt(m.median_mean_reward, false),
            m.median_iterations_to_threshold
                .map_or_else(|| "not reached".to_string(), |i| i.to_string()),
            m.failures.len()
        );
    }
    if !report.warnings.is_empty() {
        out.push_str("\nWarnings:\n\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    for m in &report.methods {
        for (seed, err) in &m.failures {
            let _ = writeln!(out, "- {} seed {seed} failed: {err}", m.method);
        }
    }
    out
}

/// Median mean-reward curve per method, as a standalone SVG line chart.
pub fn curves_svg(report: &AblationReport) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 3] = ["#d62728", "#1f77b4", "#2ca02c"];

    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for m in &report.methods {
        let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &m.runs {
            for &(iter, reward, _) in &r.curve {
                by_iter.entry(iter).or_default().push(reward);
            }
        }
        let pts = by_iter
            .into_iter()
            .filter_map(|(i, v)| median(&v).map(|y| (i as f64, y)))
            .collect();
        series.push((m.method.to_string(), pts));
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| PAD + x / x_max * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y_min) / (y_max - y_min) * (H - 2.0 * PAD);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(svg, "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>", H - PAD);
    for k in 0..=4 {
        let y = y_min + (y_max - y_min) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{y:.0}</text>",
            PAD - 6.0,
            sy(y) + 4.0
        );
        let x = x_max * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x:.0}</text>",
            sx(x),
            H - PAD + 18.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>",
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">median mean reward</text>",
        H / 2.0,
        H / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        let ly = PAD + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{name}</text>",
            W - PAD - 80.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
