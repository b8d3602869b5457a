use serde::{Deserialize, Serialize};

use crate::centroidal::{Phase, StanceSide, Vec2, Vec3};
use crate::controller::Relaxation;
use crate::sim::scenario::GaitKind;

/// One sampled row: a control tick or an event at its exact time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub step: usize,
    pub side: StanceSide,
    pub gait: GaitKind,
    pub phase: Phase,
    pub com: Vec3,
    pub com_vel: Vec3,
    pub dcm: Vec3,
    /// Stance VRP; NaN in flight.
    pub vrp: Vec3,
    pub foothold: Vec3,
    pub u_next: Vec2,
    pub gamma: f64,
    pub t_s: f64,
    pub t_f: f64,
    pub b: Vec2,
    pub objective: f64,
    pub relaxation: Relaxation,
    /// NaN in flight.
    pub friction_margin: f64,
    /// Semicolon-separated tags; empty for plain ticks.
    pub event: String,
}

/// Realized values of one completed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub side: StanceSide,
    pub gait: GaitKind,
    pub omega: f64,
    pub t_start: f64,
    pub foothold: Vec3,
    pub com_start: Vec3,
    pub t_end: f64,
    pub com_end: Vec3,
    pub t_s: f64,
    pub t_f: f64,
    pub next_foothold: Vec3,
    /// `ξ_T - r_vrp,T`: DCM of this step at touchdown minus the next VRP.
    pub b: Vec3,
}

impl StepRecord {
    pub fn duration(&self) -> f64 {
        self.t_s + self.t_f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub ticks: Vec<TickRecord>,
    pub steps: Vec<StepRecord>,
    pub failure: Option<Failure>,
}

impl TrajectoryLog {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn min_friction_margin(&self) -> f64 {
        self.ticks
            .iter()
            .map(|r| r.friction_margin)
            .filter(|m| !m.is_nan())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean horizontal CoM velocity over the completed steps `from..`.
    pub fn mean_velocity(&self, from: usize) -> Option<Vec2> {
        let first = self.steps.get(from)?;
        let last = self.steps.last()?;
        let d = last.com_end - first.com_start;
        let dt = last.t_end - first.t_start;
        (dt > 0.0).then(|| Vec2::new(d.x, d.y) / dt)
    }

    pub fn relaxed_ticks(&self) -> usize {
        self.ticks.iter().filter(|r| r.relaxation != Relaxation::None).count()
    }
}
