//! Run artifacts: a tick table, a step table and a JSON summary.
//!
//! Column orders are fixed by [`TICK_COLUMNS`] and [`STEP_COLUMNS`]. Reals
//! are written in `{:.15e}` form (16 significant digits); quantities that do
//! not apply, such as the VRP in flight, are written as `NaN`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gait_core::sim::{StepRecord, TickRecord, TrajectoryLog};
use gait_core::Vec3;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const TICK_COLUMNS: [&str; 36] = [
    "t", "step", "side", "gait", "phase", "com_x", "com_y", "com_z", "com_vel_x", "com_vel_y", "com_vel_z", "dcm_x",
    "dcm_y", "dcm_z", "vrp_x", "vrp_y", "vrp_z", "foot_x", "foot_y", "foot_z", "u_next_x", "u_next_y", "gamma",
    "t_s", "t_f", "b_x", "b_y", "objective", "relaxation", "friction_margin", "event", "step_duration", "t_step",
    "xi_minus_vrp_x", "xi_minus_vrp_y", "xi_minus_vrp_z",
];

pub const STEP_COLUMNS: [&str; 25] = [
    "step", "side", "gait", "omega", "t_start", "t_end", "t_s", "t_f", "duration", "foot_x", "foot_y", "foot_z",
    "next_foot_x", "next_foot_y", "next_foot_z", "com_start_x", "com_start_y", "com_start_z", "com_end_x",
    "com_end_y", "com_end_z", "b_x", "b_y", "b_z", "step_length",
];

fn real(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        write!(out, "{v:.15e}").unwrap();
    }
}

fn reals(out: &mut String, vs: &[f64]) {
    for v in vs {
        out.push(',');
        real(out, *v);
    }
}

fn vec3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn tick_row(out: &mut String, r: &TickRecord, step_start: f64) {
    real(out, r.t);
    write!(out, ",{},{},{},{}", r.step, r.side.as_str(), r.gait.as_str(), r.phase.as_str()).unwrap();
    for v in [&r.com, &r.com_vel, &r.dcm, &r.vrp, &r.foothold] {
        reals(out, &vec3(v));
    }
    reals(out, &[r.u_next.x, r.u_next.y, r.gamma, r.t_s, r.t_f, r.b.x, r.b.y, r.objective]);
    write!(out, ",{}", r.relaxation.as_str()).unwrap();
    reals(out, &[r.friction_margin]);
    write!(out, ",{}", r.event).unwrap();
    let offset = r.dcm - r.vrp;
    reals(out, &[r.t_s + r.t_f, r.t - step_start, offset.x, offset.y, offset.z]);
    out.push('\n');
}

fn step_row(out: &mut String, s: &StepRecord) {
    write!(out, "{},{},{}", s.step, s.side.as_str(), s.gait.as_str()).unwrap();
    reals(out, &[s.omega, s.t_start, s.t_end, s.t_s, s.t_f, s.duration()]);
    for v in [&s.foothold, &s.next_foothold, &s.com_start, &s.com_end, &s.b] {
        reals(out, &vec3(v));
    }
    let d = s.next_foothold - s.foothold;
    reals(out, &[d.x.hypot(d.y)]);
    out.push('\n');
}

pub fn tick_csv(log: &TrajectoryLog) -> String {
    let mut out = TICK_COLUMNS.join(",");
    out.push('\n');
    for r in &log.ticks {
        let start = log.steps.get(r.step).map_or_else(|| step_start_from_ticks(log, r.step), |s| s.t_start);
        tick_row(&mut out, r, start);
    }
    out
}

/// Start of a step that has not completed: its first logged tick.
fn step_start_from_ticks(log: &TrajectoryLog, step: usize) -> f64 {
    log.ticks.iter().find(|r| r.step == step).map_or(0.0, |r| r.t)
}

pub fn step_csv(log: &TrajectoryLog) -> String {
    let mut out = STEP_COLUMNS.join(",");
    out.push('\n');
    for s in &log.steps {
        step_row(&mut out, s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureSummary {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub gait: &'static str,
    pub duration: f64,
    pub b: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub succeeded: bool,
    pub failure: Option<FailureSummary>,
    pub steps: usize,
    pub ticks: usize,
    pub relaxed_ticks: usize,
    /// Mean horizontal velocity over all completed steps.
    pub mean_velocity: Option<[f64; 2]>,
    /// `null` when no stance tick was logged.
    pub min_friction_margin: Option<f64>,
    pub per_step: Vec<StepSummary>,
}

impl RunSummary {
    pub fn from_log(log: &TrajectoryLog) -> Self {
        let margin = log.min_friction_margin();
        Self {
            succeeded: log.succeeded(),
            failure: log.failure.as_ref().map(|f| FailureSummary {
                t: f.t,
                reason: f.reason.clone(),
            }),
            steps: log.steps.len(),
            ticks: log.ticks.len(),
            relaxed_ticks: log.relaxed_ticks(),
            mean_velocity: log.mean_velocity(0).map(|v| [v.x, v.y]),
            min_friction_margin: margin.is_finite().then_some(margin),
            per_step: log
                .steps
                .iter()
                .map(|s| StepSummary {
                    step: s.step,
                    gait: s.gait.as_str(),
                    duration: s.duration(),
                    b: vec3(&s.b),
                })
                .collect(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts always serialize");
    s.push('\n');
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Write `ticks.csv`, `steps.csv` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, log: &TrajectoryLog) -> Result<RunSummary> {
    let summary = RunSummary::from_log(log);
    write_file(dir, "ticks.csv", &tick_csv(log))?;
    write_file(dir, "steps.csv", &step_csv(log))?;
    write_file(dir, "summary.json", &to_json(&summary))?;
    Ok(summary)
}
