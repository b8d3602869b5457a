//! Exact propagation of CoM and DCM through stance and flight, and the
//! projections of current measurements onto the take-off instant.

use serde::{Deserialize, Serialize};

use crate::centroidal::{check_omega, gravity_vec, CentroidalState, Phase, StanceSide, Vec3};
use crate::error::{ensure_finite, GaitError, Result};

/// Clock slack accepted when a propagation target lands on a phase boundary.
const CLOCK_TOL: f64 = 1e-12;

/// Per-step constants: the stance VRP, the frequency and the step timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepContext {
    /// VRP of the current stance foot (taken as the measured VRP during stance).
    pub vrp0: Vec3,
    pub omega: f64,
    /// `e^{ω T_s}`
    pub gamma: f64,
    pub t_f: f64,
    pub stance_side: StanceSide,
    pub g: f64,
}

impl StepContext {
    pub fn t_s(&self) -> f64 {
        self.gamma.ln() / self.omega
    }

    pub fn step_duration(&self) -> f64 {
        self.t_s() + self.t_f
    }

    pub fn validate(&self) -> Result<()> {
        check_omega(self.omega)?;
        ensure_finite("step context", &[self.gamma, self.t_f, self.g])?;
        ensure_finite("vrp", self.vrp0.as_slice())?;
        if self.gamma < 1.0 {
            return Err(GaitError::InvalidInput(format!("Gamma {} below 1", self.gamma)));
        }
        if self.t_f < 0.0 {
            return Err(GaitError::InvalidInput(format!("negative flight time {}", self.t_f)));
        }
        Ok(())
    }
}

/// Closed-form stance evolution about a fixed VRP over `dt`, without range checks.
pub fn stance_flow(state: &CentroidalState, vrp: &Vec3, omega: f64, dt: f64) -> CentroidalState {
    let grow = (omega * dt).exp();
    let decay = (-omega * dt).exp();
    let dcm = grow * (state.dcm - vrp) + vrp;
    let com = 0.5 * (dcm + vrp + decay * (2.0 * state.com - state.dcm - vrp));
    CentroidalState {
        com,
        com_vel: omega * (dcm - com),
        dcm,
        t: state.t + dt,
        phase: Phase::Stance,
    }
}

/// Ballistic evolution over `dt`, without range checks.
pub fn flight_flow(state: &CentroidalState, omega: f64, g: f64, dt: f64) -> CentroidalState {
    let gv = gravity_vec(g);
    let half_dt2 = 0.5 * dt * dt;
    CentroidalState {
        com: half_dt2 * gv + dt * state.com_vel + state.com,
        com_vel: state.com_vel + dt * gv,
        dcm: half_dt2 * gv + dt * (state.com_vel + gv / omega) + state.dcm,
        t: state.t + dt,
        phase: Phase::Flight,
    }
}

/// Propagate a stance state by `dt`; the resulting clock must not pass `T_s`.
pub fn propagate_stance(state0: &CentroidalState, ctx: &StepContext, dt: f64) -> Result<CentroidalState> {
    ctx.validate()?;
    ensure_finite("dt", &[dt])?;
    let t_s = ctx.t_s();
    let target = state0.t + dt;
    if dt < 0.0 || target > t_s + CLOCK_TOL {
        return Err(GaitError::OutOfRange {
            what: "stance clock",
            value: target,
            min: state0.t,
            max: t_s,
        });
    }
    Ok(stance_flow(state0, &ctx.vrp0, ctx.omega, dt))
}

/// Propagate a flight state by `dt`.
pub fn propagate_flight(state: &CentroidalState, omega: f64, g: f64, dt: f64) -> Result<CentroidalState> {
    check_omega(omega)?;
    ensure_finite("dt", &[dt])?;
    if dt < 0.0 {
        return Err(GaitError::OutOfRange {
            what: "flight dt",
            value: dt,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(flight_flow(state, omega, g, dt))
}

/// Belief about the take-off CoM velocity: the nominal value during stance,
/// the measurement rolled back to take-off during flight.
pub fn project_takeoff_velocity(state: &CentroidalState, nominal_vel_ts: &Vec3, t_s: f64, g: f64) -> Vec3 {
    match state.phase {
        Phase::Stance => *nominal_vel_ts,
        Phase::Flight => state.com_vel - (state.t - t_s) * gravity_vec(g),
    }
}

/// `e^{-ωt}(ξ_t - r_vrp,t)`: the coefficient of Γ in the stance take-off DCM.
pub fn takeoff_dcm_slope(state: &CentroidalState, ctx: &StepContext) -> Vec3 {
    (-ctx.omega * state.t).exp() * (state.dcm - ctx.vrp0)
}

/// Belief about the DCM at take-off, obtained by evolving the current
/// measurement forward (stance) or backward (flight) in time.
pub fn project_takeoff_dcm(state: &CentroidalState, ctx: &StepContext) -> Vec3 {
    match state.phase {
        Phase::Stance => ctx.gamma * takeoff_dcm_slope(state, ctx) + ctx.vrp0,
        Phase::Flight => {
            let t_s = ctx.t_s();
            let tau = state.t - t_s;
            let gv = gravity_vec(ctx.g);
            state.com - 0.5 * tau * tau * gv + (state.com_vel - tau * gv) * (1.0 / ctx.omega + t_s - state.t)
        }
    }
}

/// CoM position at take-off predicted from a mid-stance measurement.
pub fn com_at_takeoff(state: &CentroidalState, ctx: &StepContext) -> Result<Vec3> {
    if state.phase != Phase::Stance {
        return Err(GaitError::InvalidInput("com_at_takeoff needs a stance state".into()));
    }
    let now = (ctx.omega * state.t).exp();
    if ctx.gamma < now * (1.0 - 1e-12) {
        return Err(GaitError::OutOfRange {
            what: "Gamma",
            value: ctx.gamma,
            min: now,
            max: f64::INFINITY,
        });
    }
    let r = ctx.vrp0;
    let ahead = ctx.gamma / now;
    Ok(0.5 * (ahead * (state.dcm - r) + (2.0 * state.com - state.dcm - r) / ahead) + r)
}

/// VRP of the next step from take-off beliefs, flight time and DCM offset.
pub fn end_of_step_vrp(v_tilde: &Vec3, xi_tilde: &Vec3, t_f: f64, b: &Vec3, omega: f64, g: f64) -> Vec3 {
    let gv = gravity_vec(g);
    0.5 * t_f * t_f * gv + t_f * (v_tilde + gv / omega) + xi_tilde - b
}
