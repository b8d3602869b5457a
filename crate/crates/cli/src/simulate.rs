use std::path::Path;

use gait_core::sim::{run_scenario, Disturbance, Scenario, SimOutput, TrajectoryLog};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, RunSummary};
use crate::config::{ConfigDocument, Sweep};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveTimes {
    pub count: usize,
    pub median: f64,
    pub p99: f64,
    pub max: f64,
}

impl SolveTimes {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let at = |q: f64| s[((s.len() - 1) as f64 * q).round() as usize];
        Some(Self {
            count: s.len(),
            median: at(0.5),
            p99: at(0.99),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub magnitude: f64,
    pub succeeded: bool,
    pub failure_t: Option<f64>,
    pub steps: usize,
    pub relaxed_ticks: usize,
    pub max_abs_b_x: f64,
    pub max_abs_b_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest magnitude whose run failed.
    pub onset: Option<f64>,
    /// Every run below the onset succeeded and every run above it failed.
    pub monotone: bool,
}

impl SweepReport {
    pub fn from_rows(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.magnitude.total_cmp(&b.magnitude));
        let onset = rows.iter().find(|r| !r.succeeded).map(|r| r.magnitude);
        let monotone = match onset {
            Some(m) => rows.iter().all(|r| r.succeeded == (r.magnitude < m)),
            None => true,
        };
        Self { rows, onset, monotone }
    }
}

pub fn sweep_scenario(base: &Scenario, sweep: &Sweep, magnitude: f64) -> Scenario {
    let mut sc = base.clone();
    sc.disturbances.push(Disturbance {
        t: sweep.t,
        dv: sweep.direction * magnitude,
    });
    sc.disturbances.sort_by(|a, b| a.t.total_cmp(&b.t));
    sc
}

fn sweep_row(magnitude: f64, log: &TrajectoryLog) -> SweepRow {
    let max_abs = |f: fn(&gait_core::sim::StepRecord) -> f64| log.steps.iter().map(f).fold(0.0, f64::max);
    SweepRow {
        magnitude,
        succeeded: log.succeeded(),
        failure_t: log.failure.as_ref().map(|f| f.t),
        steps: log.steps.len(),
        relaxed_ticks: log.relaxed_ticks(),
        max_abs_b_x: max_abs(|s| s.b.x.abs()),
        max_abs_b_y: max_abs(|s| s.b.y.abs()),
    }
}

/// Run every sweep magnitude in parallel; runs share nothing.
pub fn run_sweep(base: &Scenario, sweep: &Sweep) -> Result<SweepReport> {
    let rows = sweep
        .magnitudes
        .par_iter()
        .map(|&m| run_scenario(&sweep_scenario(base, sweep, m)).map(|out| sweep_row(m, &out.log)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SweepReport::from_rows(rows))
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("magnitude,succeeded,failure_t,steps,relaxed_ticks,max_abs_b_x,max_abs_b_y\n");
    for r in &report.rows {
        let failure_t = r.failure_t.map_or_else(|| "NaN".to_string(), |t| format!("{t:.15e}"));
        out.push_str(&format!(
            "{:.15e},{},{failure_t},{},{},{:.15e},{:.15e}\n",
            r.magnitude, r.succeeded, r.steps, r.relaxed_ticks, r.max_abs_b_x, r.max_abs_b_y
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub output: SimOutput,
    pub summary: RunSummary,
    pub solve_times: Option<SolveTimes>,
    pub sweep: Option<SweepReport>,
}

/// Run the configured scenario, plus the sweep when one is configured, and
/// write all artifacts into `out_dir`.
pub fn cmd_simulate(doc: &ConfigDocument, out_dir: &Path) -> Result<SimulateOutcome> {
    let scenario = doc.scenario()?;
    let output = run_scenario(&scenario)?;
    let summary = artifacts::write_run(out_dir, &output.log)?;
    let sweep = match &doc.sweep {
        Some(sweep) => {
            let report = run_sweep(&scenario, sweep)?;
            artifacts::write_file(out_dir, "sweep.csv", &sweep_csv(&report))?;
            artifacts::write_file(out_dir, "sweep.json", &artifacts::to_json(&report))?;
            Some(report)
        }
        None => None,
    };
    Ok(SimulateOutcome {
        solve_times: SolveTimes::from_samples(&output.solve_times),
        output,
        summary,
        sweep,
    })
}
