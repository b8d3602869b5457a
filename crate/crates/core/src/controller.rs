//! One-step DCM-offset controller: every tick it projects the measured state
//! onto the take-off instant and solves a 6-variable QP for the next foothold
//! `u_T`, the stance-time parameter Γ, the flight time `T_f` and the
//! horizontal DCM offset `b`.
//!
//! Decision vector: `(u_x, u_y, Γ, T_f, b_x, b_y)`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::centroidal::{CentroidalState, GaitSpec, Phase, StanceSide, Vec2, Vec3, Weights};
use crate::closed_form::{project_takeoff_dcm, project_takeoff_velocity, takeoff_dcm_slope, StepContext};
use crate::error::{GaitError, Result};
use crate::nominal::{Mode, NominalGait};
use crate::qp::{QpProblem, QpSolution, QpSolver, QpStatus};

pub const N_VARS: usize = 6;
const IU_X: usize = 0;
const IU_Y: usize = 1;
const IGAMMA: usize = 2;
const ITF: usize = 3;
const IB_X: usize = 4;
const IB_Y: usize = 5;

/// Floor on each diagonal cost weight so the Hessian stays positive definite.
const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCommand {
    pub u: Vec2,
    pub gamma: f64,
    pub t_f: f64,
    pub b: Vec2,
    pub omega: f64,
}

impl StepCommand {
    pub fn t_s(&self) -> f64 {
        self.gamma.ln() / self.omega
    }

    pub fn step_duration(&self) -> f64 {
        self.t_s() + self.t_f
    }

    /// Pinned entries take their pin value exactly rather than the solver's
    /// rounded copy.
    fn from_solution(x: &DVector<f64>, bounds: &ControllerBounds, omega: f64) -> Self {
        Self {
            u: Vec2::new(x[IU_X], x[IU_Y]),
            gamma: bounds.gamma_pin.unwrap_or(x[IGAMMA]),
            t_f: bounds.t_f_pin.unwrap_or(x[ITF]),
            b: Vec2::new(x[IB_X], x[IB_Y]),
            omega,
        }
    }

    /// The nominal command for a step starting at foothold `u0`.
    pub fn nominal(gait: &NominalGait, side: StanceSide, u0: &Vec2) -> Self {
        let b = gait.b(side);
        Self {
            u: u0 + gait.du(side),
            gamma: gait.gamma_nom,
            t_f: gait.t_f_nom,
            b: Vec2::new(b.x, b.y),
            omega: gait.omega,
        }
    }
}

/// Touchdown target of the step that follows the current flight: the
/// frequency of the next step and the height of its DCM `z + ż/ω'` above the
/// landing ground at touchdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub omega: f64,
    pub dcm_height: f64,
}

impl Landing {
    /// Land into the periodic orbit of `gait`.
    pub fn from_nominal(gait: &NominalGait) -> Self {
        Self {
            omega: gait.omega,
            dcm_height: gait.g / (gait.omega * gait.omega) + gait.b_right.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerInputs {
    pub state: CentroidalState,
    /// `vrp0` is the measured VRP; during flight `gamma` is the realized Γ.
    pub ctx: StepContext,
    /// Current foothold, horizontal.
    pub u0: Vec2,
    pub nominal: NominalGait,
    pub spec: GaitSpec,
    pub landing: Landing,
}

impl ControllerInputs {
    /// Height of the ground under the stance foot.
    pub fn ground(&self) -> f64 {
        self.ctx.vrp0.z - self.spec.g / (self.ctx.omega * self.ctx.omega)
    }

    pub fn mode(&self) -> Mode {
        self.nominal.mode
    }

    pub fn validate(&self) -> Result<()> {
        self.ctx.validate()?;
        if (self.ctx.omega - self.spec.omega).abs() > 1e-12 * self.spec.omega
            || (self.nominal.omega - self.spec.omega).abs() > 1e-12 * self.spec.omega
        {
            return Err(GaitError::InvalidInput("step, spec and nominal gait disagree on omega".into()));
        }
        if self.state.phase == Phase::Flight && self.state.t < self.ctx.t_s() - 1e-9 {
            return Err(GaitError::InvalidInput("flight state before the realized take-off".into()));
        }
        if self.state.phase == Phase::Flight && !self.mode().has_flight() {
            return Err(GaitError::InvalidInput("flight state in a gait without flight".into()));
        }
        Ok(())
    }
}

/// `(Γ_min, Γ_max)` from the swing-time and height limits, before any cap.
///
/// Walking uses the fixed swing time `t_min`; running requires the CoM to be
/// rising at take-off. `Γ_max` keeps the take-off height below `z_max` and is
/// unbounded when the DCM sits at the VRP height. Heights are taken relative
/// to `ground`.
pub fn gamma_bounds(state: &CentroidalState, ctx: &StepContext, spec: &GaitSpec, mode: Mode, ground: f64) -> Result<(f64, f64)> {
    if state.phase != Phase::Stance {
        return Err(GaitError::InvalidInput("gamma_bounds needs a stance state".into()));
    }
    let omega = ctx.omega;
    let now = (omega * state.t).exp();
    let z = state.com.z;
    let xi = state.dcm.z;
    let zr = ctx.vrp0.z;
    let d = xi - zr;
    let mut g_min = if mode.has_flight() {
        if d <= 0.0 {
            return Err(GaitError::StateInvalid(format!(
                "vertical DCM {xi} not above VRP {zr} while running"
            )));
        }
        now * ((2.0 * z.max(xi) - xi - zr) / d).sqrt()
    } else {
        (omega * spec.t_min).exp()
    };
    g_min = g_min.max(now);

    let z_max = ground + spec.z_max;
    let g_max = if !mode.has_flight() || d <= 1e-12 {
        f64::INFINITY
    } else {
        let radicand = (z_max - xi).powi(2) + 2.0 * (z_max - z) * d;
        now / d * (z_max - zr + radicand.max(0.0).sqrt())
    };
    Ok((g_min, g_max))
}

/// Time for a ballistic CoM leaving at height `z0` with vertical speed `vz`
/// to descend to `level`. When the apex stays below `level` the apex time is
/// returned.
fn descent_time(z0: f64, vz: f64, level: f64, g: f64) -> f64 {
    let radicand = 2.0 * g * (z0 - level) + vz * vz;
    (radicand.max(0.0).sqrt() + vz) / g
}

/// `(T_f_min, T_f_max)`: the flight must not end before now and must land
/// between `z_min` and `z_max` above `ground`.
///
/// `xi_z` and `v_z` are the take-off beliefs of the vertical DCM and velocity.
pub fn flight_bounds(state: &CentroidalState, ctx: &StepContext, spec: &GaitSpec, xi_z: f64, v_z: f64, ground: f64) -> Result<(f64, f64)> {
    let elapsed = match state.phase {
        Phase::Stance => 0.0,
        Phase::Flight => (state.t - ctx.t_s()).max(0.0),
    };
    let z0 = xi_z - v_z / ctx.omega;
    let t_min = elapsed.max(descent_time(z0, v_z, ground + spec.z_max, spec.g));
    let t_max = descent_time(z0, v_z, ground + spec.z_min, spec.g);
    if t_min > t_max {
        return Err(GaitError::InfeasibleWindow { min: t_min, max: t_max });
    }
    Ok((t_min, t_max))
}

/// Flight time at which the DCM of the next step, `z + ż/ω'`, comes down to
/// `level`, never earlier than `elapsed`. If it never gets there the flight
/// ends now.
pub fn touchdown_flight_time(z0: f64, vz: f64, omega_next: f64, g: f64, level: f64, elapsed: f64) -> f64 {
    let slope = vz - g / omega_next;
    let radicand = slope * slope + 2.0 * g * (z0 + vz / omega_next - level);
    if radicand < 0.0 {
        return elapsed;
    }
    ((slope + radicand.sqrt()) / g).max(elapsed)
}

/// Take-off beliefs used to build the QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projections {
    /// Coefficient of Γ in the take-off DCM during stance; zero in flight.
    pub slope: Vec3,
    /// Take-off DCM; in stance evaluated at the clamped nominal Γ.
    pub xi: Vec3,
    pub v: Vec3,
}

impl Projections {
    fn new(inp: &ControllerInputs, gamma_ref: f64) -> Self {
        let st = &inp.state;
        match st.phase {
            Phase::Stance => {
                let slope = takeoff_dcm_slope(st, &inp.ctx);
                Self {
                    slope,
                    xi: gamma_ref * slope + inp.ctx.vrp0,
                    v: inp.nominal.vel_ts(inp.ctx.stance_side),
                }
            }
            Phase::Flight => Self {
                slope: Vec3::zeros(),
                xi: project_takeoff_dcm(st, &inp.ctx),
                v: project_takeoff_velocity(st, &Vec3::zeros(), inp.ctx.t_s(), inp.spec.g),
            },
        }
    }
}

/// Boxes on Γ and `T_f` used in one QP, plus pins for pinned variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerBounds {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub t_f_min: f64,
    pub t_f_max: f64,
    pub gamma_pin: Option<f64>,
    pub t_f_pin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    None,
    /// Nominal-tracking terms dropped, DCM-offset term kept.
    DroppedTracking,
    /// Γ and `T_f` boxes widened to their physical extremes.
    WidenedBounds,
}

impl Relaxation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relaxation::None => "none",
            Relaxation::DroppedTracking => "dropped_tracking",
            Relaxation::WidenedBounds => "widened_bounds",
        }
    }
}

/// Physical extremes of Γ and `T_f`.
fn widest_bounds(inp: &ControllerInputs) -> (f64, f64, f64, f64) {
    let omega = inp.ctx.omega;
    let now = (omega * inp.state.t).exp();
    let cap = (omega * inp.spec.t_s_max).exp().max(now);
    let elapsed = match inp.state.phase {
        Phase::Stance => 0.0,
        Phase::Flight => (inp.state.t - inp.ctx.t_s()).max(0.0),
    };
    let t_f_max = if inp.mode().has_flight() { inp.spec.t_f_max.max(elapsed) } else { 0.0 };
    (now, cap, elapsed, t_f_max)
}

/// Bounds for the first QP attempt. Returns a diagnostic instead of the
/// bounds when the geometric limits are unusable for this state.
pub fn controller_bounds(inp: &ControllerInputs) -> std::result::Result<ControllerBounds, (ControllerBounds, GaitError)> {
    let (now, cap, elapsed, t_f_cap) = widest_bounds(inp);
    let widest = ControllerBounds {
        gamma_min: now,
        gamma_max: cap,
        t_f_min: elapsed,
        t_f_max: t_f_cap,
        gamma_pin: None,
        t_f_pin: None,
    };
    let mode = inp.mode();
    let ground = inp.ground();
    let g = inp.spec.g;
    match inp.state.phase {
        Phase::Stance => {
            let t_f_pin = (!mode.has_flight()).then_some(0.0);
            let widest = ControllerBounds { t_f_pin, ..widest };
            let (g_min, g_max) = match gamma_bounds(&inp.state, &inp.ctx, &inp.spec, mode, ground) {
                Ok(b) => b,
                Err(e) => return Err((widest, e)),
            };
            let g_max = g_max.min(cap);
            if !mode.has_flight() {
                return Ok(ControllerBounds {
                    gamma_min: g_min,
                    gamma_max: g_max,
                    t_f_min: 0.0,
                    t_f_max: 0.0,
                    gamma_pin: None,
                    t_f_pin,
                });
            }
            let gamma_ref = inp.nominal.gamma_nom.min(g_max).max(g_min);
            let proj = Projections::new(inp, gamma_ref);
            match flight_bounds(&inp.state, &inp.ctx, &inp.spec, proj.xi.z, proj.v.z, ground) {
                Ok((t_min, t_max)) => Ok(ControllerBounds {
                    gamma_min: g_min,
                    gamma_max: g_max,
                    t_f_min: t_min,
                    t_f_max: t_max.min(t_f_cap),
                    gamma_pin: None,
                    t_f_pin: None,
                }),
                Err(e) => Err((widest, e)),
            }
        }
        Phase::Flight => {
            let proj = Projections::new(inp, inp.ctx.gamma);
            let z0 = proj.xi.z - proj.v.z / inp.ctx.omega;
            let level = ground + inp.landing.dcm_height;
            let t_land = touchdown_flight_time(z0, proj.v.z, inp.landing.omega, g, level, elapsed);
            let widest = ControllerBounds {
                gamma_pin: Some(inp.ctx.gamma),
                t_f_pin: Some(t_land),
                ..widest
            };
            match flight_bounds(&inp.state, &inp.ctx, &inp.spec, proj.xi.z, proj.v.z, ground) {
                Ok((t_min, t_max)) => Ok(ControllerBounds {
                    gamma_min: inp.ctx.gamma,
                    gamma_max: inp.ctx.gamma,
                    t_f_min: t_min,
                    t_f_max: t_max.min(t_f_cap),
                    ..widest
                }),
                Err(e) => Err((
                    ControllerBounds {
                        gamma_min: inp.ctx.gamma,
                        gamma_max: inp.ctx.gamma,
                        ..widest
                    },
                    e,
                )),
            }
        }
    }
}

/// A controller QP together with the constant dropped from its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QpAssembly {
    pub problem: QpProblem,
    pub constant: f64,
}

impl QpAssembly {
    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        self.problem.objective(x) + self.constant
    }
}

/// Build the step-adjustment QP for `inp` under `bounds` and `weights`.
pub fn assemble_qp(inp: &ControllerInputs, bounds: &ControllerBounds, weights: &Weights) -> QpAssembly {
    let spec = &inp.spec;
    let side = inp.ctx.stance_side;
    let gamma_ref = bounds.gamma_pin.unwrap_or_else(|| inp.nominal.gamma_nom.min(bounds.gamma_max).max(bounds.gamma_min));
    let proj = Projections::new(inp, gamma_ref);
    let target = {
        let du = inp.nominal.du(side);
        let b = inp.nominal.b(side);
        [inp.u0.x + du.x, inp.u0.y + du.y, inp.nominal.gamma_nom, inp.nominal.t_f_nom, b.x, b.y]
    };
    let w = [weights.step, weights.step, weights.gamma, weights.flight, weights.offset, weights.offset].map(|a| a.max(WEIGHT_FLOOR));
    let h = DMatrix::from_diagonal(&DVector::from_iterator(N_VARS, w.iter().map(|a| 2.0 * a)));
    let q = DVector::from_iterator(N_VARS, w.iter().zip(target.iter()).map(|(a, t)| -2.0 * a * t));
    let constant = w.iter().zip(target.iter()).map(|(a, t)| a * t * t).sum();

    // Dynamics: u - Γ s - T_f ṽ + b = r in stance, u - T_f ṽ + b = ξ̃ in flight.
    let mut eq_rows: Vec<([f64; N_VARS], f64)> = Vec::with_capacity(4);
    let (rhs, slope) = match inp.state.phase {
        Phase::Stance => (inp.ctx.vrp0, proj.slope),
        Phase::Flight => (proj.xi, Vec3::zeros()),
    };
    eq_rows.push(([1.0, 0.0, -slope.x, -proj.v.x, 1.0, 0.0], rhs.x));
    eq_rows.push(([0.0, 1.0, -slope.y, -proj.v.y, 0.0, 1.0], rhs.y));
    if let Some(gp) = bounds.gamma_pin {
        eq_rows.push(([0.0, 0.0, 1.0, 0.0, 0.0, 0.0], gp));
    }
    if let Some(tp) = bounds.t_f_pin {
        eq_rows.push(([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], tp));
    }

    let dir = side.next_foot_direction();
    let mut in_rows: Vec<([f64; N_VARS], f64)> = Vec::with_capacity(12);
    // Reachability of the next foothold, relative to the flight drift T_f ṽ.
    in_rows.push(([1.0, 0.0, 0.0, -proj.v.x, 0.0, 0.0], inp.u0.x + spec.du_min.x));
    in_rows.push(([-1.0, 0.0, 0.0, proj.v.x, 0.0, 0.0], -(inp.u0.x + spec.du_max.x)));
    in_rows.push(([0.0, dir, 0.0, -dir * proj.v.y, 0.0, 0.0], dir * inp.u0.y + spec.du_min.y));
    in_rows.push(([0.0, -dir, 0.0, dir * proj.v.y, 0.0, 0.0], -(dir * inp.u0.y + spec.du_max.y)));
    if bounds.gamma_pin.is_none() {
        in_rows.push(([0.0, 0.0, 1.0, 0.0, 0.0, 0.0], bounds.gamma_min));
        if bounds.gamma_max.is_finite() {
            in_rows.push(([0.0, 0.0, -1.0, 0.0, 0.0, 0.0], -bounds.gamma_max));
        }
    }
    if bounds.t_f_pin.is_none() {
        in_rows.push(([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], bounds.t_f_min));
        in_rows.push(([0.0, 0.0, 0.0, -1.0, 0.0, 0.0], -bounds.t_f_max));
    }
    // Viability of the DCM offset; the lateral box is oriented by the stance side.
    in_rows.push(([0.0, 0.0, 0.0, 0.0, 1.0, 0.0], spec.b_x_min));
    in_rows.push(([0.0, 0.0, 0.0, 0.0, -1.0, 0.0], -spec.b_x_max));
    in_rows.push(([0.0, 0.0, 0.0, 0.0, 0.0, dir], -spec.b_y_in_max));
    in_rows.push(([0.0, 0.0, 0.0, 0.0, 0.0, -dir], -spec.b_y_out_max));

    let to_mat = |rows: &[([f64; N_VARS], f64)]| {
        let a = DMatrix::from_fn(rows.len(), N_VARS, |r, c| rows[r].0[c]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        (a, b)
    };
    let (a_eq, b_eq) = to_mat(&eq_rows);
    let (a_in, b_in) = to_mat(&in_rows);
    QpAssembly {
        problem: QpProblem { h, q, a_eq, b_eq, a_in, b_in },
        constant,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub command: StepCommand,
    /// Full cost of the accepted QP, including its constant term.
    pub objective: f64,
    pub relaxation: Relaxation,
    pub bounds: ControllerBounds,
    pub iterations: usize,
    /// Total solver wall time across ladder attempts, seconds.
    pub solve_time: f64,
    /// Why the first attempt was rejected, if it was.
    pub diagnostic: Option<String>,
}

/// Owns a warm-started solver; one tick at a time.
#[derive(Debug, Clone, Default)]
pub struct StepController {
    solver: QpSolver,
}

impl StepController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.solver.reset();
    }

    pub fn tick(&mut self, inp: &ControllerInputs) -> Result<TickOutcome> {
        inp.validate()?;
        let mut solve_time = 0.0;
        let mut iterations = 0;
        let mut diagnostic = None;
        let (first_bounds, widen_only) = match controller_bounds(inp) {
            Ok(b) => (b, false),
            Err((widest, e)) => {
                diagnostic = Some(e.to_string());
                (widest, true)
            }
        };
        let dropped = Weights {
            step: 0.0,
            gamma: 0.0,
            flight: 0.0,
            offset: inp.spec.weights.offset,
        };
        let widened = {
            let (now, cap, elapsed, t_f_max) = widest_bounds(inp);
            ControllerBounds {
                gamma_min: first_bounds.gamma_pin.unwrap_or(now),
                gamma_max: first_bounds.gamma_pin.unwrap_or(cap),
                t_f_min: elapsed,
                t_f_max,
                ..first_bounds
            }
        };
        let ladder = [
            (Relaxation::None, first_bounds, inp.spec.weights),
            (Relaxation::DroppedTracking, first_bounds, dropped),
            (Relaxation::WidenedBounds, widened, dropped),
        ];
        let mut last_status = QpStatus::Infeasible;
        for (level, bounds, weights) in ladder {
            if widen_only && level != Relaxation::WidenedBounds {
                continue;
            }
            let asm = assemble_qp(inp, &bounds, &weights);
            let start = Instant::now();
            let sol: QpSolution = self.solver.solve(&asm.problem)?;
            solve_time += start.elapsed().as_secs_f64();
            iterations += sol.iterations;
            if sol.status == QpStatus::Optimal {
                if level != Relaxation::None && diagnostic.is_none() {
                    diagnostic = Some(format!("QP {:?} before relaxation", last_status));
                }
                return Ok(TickOutcome {
                    command: StepCommand::from_solution(&sol.x, &bounds, inp.ctx.omega),
                    objective: asm.cost(&sol.x),
                    relaxation: level,
                    bounds,
                    iterations,
                    solve_time,
                    diagnostic,
                });
            }
            last_status = sol.status;
        }
        Err(GaitError::Unviable(format!(
            "QP {:?} after relaxation{}",
            last_status,
            diagnostic.map(|d| format!(" ({d})")).unwrap_or_default()
        )))
    }
}

/// Single tick with a fresh solver.
pub fn controller_tick(inp: &ControllerInputs) -> Result<TickOutcome> {
    StepController::new().tick(inp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{flight_flow, stance_flow};
    use crate::oracle::brute_force_qp;
    use crate::qp::{kkt_residuals, solve_qp};
    use proptest::prelude::*;

    fn inputs_at(spec: &GaitSpec, side: StanceSide, t: f64) -> ControllerInputs {
        let nominal = NominalGait::new(spec).unwrap();
        let u0 = Vec2::new(0.1, -0.05);
        let vrp0 = Vec3::new(u0.x, u0.y, spec.vrp_height());
        let s0 = nominal.initial_state(side, &vrp0).unwrap();
        let state = stance_flow(&s0, &vrp0, spec.omega, t);
        ControllerInputs {
            state,
            ctx: StepContext {
                vrp0,
                omega: spec.omega,
                gamma: nominal.gamma_nom,
                t_f: nominal.t_f_nom,
                stance_side: side,
                g: spec.g,
            },
            u0,
            nominal,
            spec: *spec,
            landing: Landing::from_nominal(&nominal),
        }
    }

    fn running() -> GaitSpec {
        GaitSpec::running().with_velocity(Vec3::new(0.5, 0.0, 0.0))
    }

    fn nominal_vector(inp: &ControllerInputs) -> DVector<f64> {
        let c = StepCommand::nominal(&inp.nominal, inp.ctx.stance_side, &inp.u0);
        DVector::from_vec(vec![c.u.x, c.u.y, c.gamma, c.t_f, c.b.x, c.b.y])
    }

    #[test]
    fn nominal_state_is_a_fixed_point() {
        for spec in [running(), GaitSpec::lipm_walking(0.32).with_velocity(Vec3::new(0.3, 0.0, 0.0))] {
            for side in [StanceSide::Right, StanceSide::Left] {
                let inp = inputs_at(&spec, side, 0.0);
                let out = controller_tick(&inp).unwrap();
                assert_eq!(out.relaxation, Relaxation::None);
                assert!(out.objective < 1e-10, "objective {}", out.objective);
                let x = nominal_vector(&inp);
                let c = out.command;
                let got = DVector::from_vec(vec![c.u.x, c.u.y, c.gamma, c.t_f, c.b.x, c.b.y]);
                assert!((got - x).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn nominal_mid_stance_and_flight_stay_nominal() {
        let spec = running();
        let inp0 = inputs_at(&spec, StanceSide::Left, 0.0);
        let ts = stance_flow(&inp0.state, &inp0.ctx.vrp0, spec.omega, inp0.nominal.t_s_nom);
        let mut mid = inp0;
        mid.state = stance_flow(&inp0.state, &inp0.ctx.vrp0, spec.omega, 0.07);
        assert!(controller_tick(&mid).unwrap().objective < 1e-10);

        let mut fl = inp0;
        fl.state = flight_flow(&CentroidalState { phase: Phase::Flight, ..ts }, spec.omega, spec.g, 0.05);
        let out = controller_tick(&fl).unwrap();
        assert!(out.objective < 1e-10, "{}", out.objective);
        assert!((out.command.t_f - inp0.nominal.t_f_nom).abs() < 1e-10);
        assert_eq!(out.command.gamma, inp0.nominal.gamma_nom);
    }

    #[test]
    fn walking_pins_flight_time() {
        let spec = GaitSpec::lipm_walking(0.32);
        let inp = inputs_at(&spec, StanceSide::Right, 0.05);
        let out = controller_tick(&inp).unwrap();
        assert_eq!(out.command.t_f, 0.0);
        let asm = assemble_qp(&inp, &out.bounds, &spec.weights);
        assert_eq!(asm.problem.a_eq.nrows(), 3);
        // Dynamics reduce to u = ξ̃ - b.
        let slope = takeoff_dcm_slope(&inp.state, &inp.ctx);
        let xi = out.command.gamma * slope + inp.ctx.vrp0;
        let c = out.command;
        assert!((c.u.x - (xi.x - c.b.x)).abs() < 1e-9);
        assert!((c.u.y - (xi.y - c.b.y)).abs() < 1e-9);
    }

    #[test]
    fn gamma_bounds_examples() {
        let spec = running();
        let inp = inputs_at(&spec, StanceSide::Right, 0.0);
        // Rising CoM: the stance may end now.
        let mut st = inp.state;
        st.t = 0.05;
        st.com_vel.z = 0.3;
        st.dcm = st.com + st.com_vel / spec.omega;
        let (gmin, _) = gamma_bounds(&st, &inp.ctx, &spec, Mode::Running, 0.0).unwrap();
        assert_eq!(gmin, (spec.omega * 0.05).exp());
        // CoM at the ceiling and at rest: no room to continue.
        st.com.z = spec.z_max;
        st.com_vel.z = 0.0;
        st.dcm = st.com;
        let (_, gmax) = gamma_bounds(&st, &inp.ctx, &spec, Mode::Running, 0.0).unwrap();
        assert!((gmax - (spec.omega * 0.05).exp()).abs() < 1e-12);
        // DCM below the VRP contradicts running.
        st.com.z = inp.ctx.vrp0.z - 0.01;
        st.dcm = st.com;
        assert!(matches!(
            gamma_bounds(&st, &inp.ctx, &spec, Mode::Running, 0.0),
            Err(GaitError::StateInvalid(_))
        ));
        let walk = GaitSpec::lipm_walking(0.32);
        let winp = inputs_at(&walk, StanceSide::Right, 0.0);
        let (gmin, gmax) = gamma_bounds(&winp.state, &winp.ctx, &walk, Mode::LipmWalking, 0.0).unwrap();
        assert_eq!(gmin, (walk.omega * walk.t_min).exp());
        assert!(gmax.is_infinite());
    }

    #[test]
    fn flight_bound_examples() {
        let spec = running();
        let inp = inputs_at(&spec, StanceSide::Right, 0.0);
        let (tmin, _) = flight_bounds(&inp.state, &inp.ctx, &spec, spec.z_max, 0.0, 0.0).unwrap();
        assert_eq!(tmin, 0.0);
        let h = 0.33;
        let (_, tmax) = flight_bounds(&inp.state, &inp.ctx, &spec, h, 0.0, 0.0).unwrap();
        assert!((tmax - (2.0 * (h - spec.z_min) / spec.g).sqrt()).abs() < 1e-15);
        // Landing window collapses when the take-off is far below the floor.
        let r = flight_bounds(&inp.state, &inp.ctx, &spec, spec.z_min - 0.1, -1.0, 0.0);
        assert!(r.is_ok() || matches!(r, Err(GaitError::InfeasibleWindow { .. })));
    }

    #[test]
    fn touchdown_time_matches_nominal_flight() {
        let spec = running();
        let gait = NominalGait::new(&spec).unwrap();
        let vrp = Vec3::new(0.0, 0.0, spec.vrp_height());
        let s0 = gait.initial_state(StanceSide::Right, &vrp).unwrap();
        let ts = stance_flow(&s0, &vrp, spec.omega, gait.t_s_nom);
        let land = Landing::from_nominal(&gait);
        let t = touchdown_flight_time(ts.com.z, ts.com_vel.z, land.omega, spec.g, land.dcm_height, 0.0);
        assert!((t - gait.t_f_nom).abs() < 1e-12);
        assert_eq!(touchdown_flight_time(ts.com.z, ts.com_vel.z, land.omega, spec.g, 10.0, 0.02), 0.02);
    }

    #[test]
    fn dynamics_rows_match_finite_differences() {
        let spec = running();
        let mut inp = inputs_at(&spec, StanceSide::Left, 0.04);
        inp.state.com_vel += Vec3::new(0.2, -0.1, 0.05);
        inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
        let out = controller_tick(&inp).unwrap();
        let asm = assemble_qp(&inp, &out.bounds, &spec.weights);
        // residual(x) = end_of_step_vrp(ṽ, ξ̃(Γ), T_f, b) - u, horizontal
        let v = inp.nominal.vel_ts(StanceSide::Left);
        let resid = |x: &[f64; 6]| {
            let ctx = StepContext { gamma: x[2], ..inp.ctx };
            let xi = project_takeoff_dcm(&inp.state, &ctx);
            let r = crate::closed_form::end_of_step_vrp(&v, &xi, x[3], &Vec3::new(x[4], x[5], 0.0), spec.omega, spec.g);
            [r.x - x[0], r.y - x[1]]
        };
        let x0 = [0.3, 0.1, 3.0, 0.12, 0.01, -0.02];
        let h = 1e-6;
        for j in 0..6 {
            let mut xp = x0;
            let mut xm = x0;
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (resid(&xp), resid(&xm));
            for i in 0..2 {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                // rows encode -(residual) = u - Γ s - T_f ṽ + b - r
                let row = -asm.problem.a_eq[(i, j)];
                assert!((fd - row).abs() < 1e-7, "row {i} col {j}: {fd} vs {row}");
            }
        }
    }

    #[test]
    fn forward_push_saturates_reach_then_cadence() {
        let spec = running();
        let push = |dv: f64| {
            let mut inp = inputs_at(&spec, StanceSide::Right, 0.03);
            inp.state.com_vel.x += dv;
            inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
            let b = controller_bounds(&inp).unwrap();
            (inp, b, assemble_qp(&inp, &b, &spec.weights))
        };

        let (inp, bounds, asm) = push(1.0);
        let sol = solve_qp(&asm.problem).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_eq!(sol.active_set, vec![1]);
        let nominal = nominal_vector(&inp);
        assert!(sol.x[IU_X] > nominal[IU_X] && sol.x[IGAMMA] < nominal[IGAMMA]);
        let oracle = brute_force_qp(&asm.problem, 1e-9).unwrap();
        assert!((sol.objective - oracle.objective).abs() < 1e-9);

        let (_, _, asm) = push(1.5);
        let sol = solve_qp(&asm.problem).unwrap();
        assert_eq!(sol.active_set, vec![1, 4]);
        assert!((sol.x[IGAMMA] - bounds.gamma_min).abs() < 1e-12);
        assert!(sol.x[IB_X] < spec.b_x_max);
        let oracle = brute_force_qp(&asm.problem, 1e-9).unwrap();
        assert!((sol.objective - oracle.objective).abs() < 1e-9);

        let (_, _, asm) = push(2.0);
        assert_eq!(solve_qp(&asm.problem).unwrap().status, QpStatus::Infeasible);
        assert!(brute_force_qp(&asm.problem, 1e-9).is_none());
    }

    #[test]
    fn side_symmetry() {
        let spec = running().with_velocity(Vec3::new(0.3, 0.0, 0.0));
        let mut r = inputs_at(&spec, StanceSide::Right, 0.02);
        let mut l = inputs_at(&spec, StanceSide::Left, 0.02);
        for inp in [&mut r, &mut l] {
            inp.u0 = Vec2::zeros();
            inp.ctx.vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
            let s0 = inp.nominal.initial_state(inp.ctx.stance_side, &inp.ctx.vrp0).unwrap();
            inp.state = stance_flow(&s0, &inp.ctx.vrp0, spec.omega, 0.02);
            inp.state.com_vel.y += 0.15 * inp.ctx.stance_side.next_foot_direction();
            inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
        }
        let a = controller_tick(&r).unwrap().command;
        let b = controller_tick(&l).unwrap().command;
        assert!((a.u.x - b.u.x).abs() < 1e-10);
        assert!((a.u.y + b.u.y).abs() < 1e-10);
        assert!((a.b.y + b.b.y).abs() < 1e-10);
        assert!((a.gamma - b.gamma).abs() < 1e-10);
    }

    #[test]
    fn deterministic_commands() {
        let spec = running();
        let mut inp = inputs_at(&spec, StanceSide::Right, 0.05);
        inp.state.com_vel.x += 0.4;
        inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
        let a = controller_tick(&inp).unwrap().command;
        let b = controller_tick(&inp).unwrap().command;
        assert_eq!(a, b);
    }

    #[test]
    fn unrecoverable_push_reports_unviable() {
        let spec = running();
        let mut inp = inputs_at(&spec, StanceSide::Right, 0.03);
        inp.state.com_vel.x += 20.0;
        inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
        assert!(matches!(controller_tick(&inp), Err(GaitError::Unviable(_))));
    }

    proptest! {
        #[test]
        fn raising_gamma_max_never_hurts(t in 0.0f64..0.1, dvx in -0.8f64..0.8, dvy in -0.4f64..0.4, extra in 0.0f64..3.0) {
            let spec = running();
            let mut inp = inputs_at(&spec, StanceSide::Left, t);
            inp.state.com_vel += Vec3::new(dvx, dvy, 0.0);
            inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
            if let Ok(bounds) = controller_bounds(&inp) {
                let tight = assemble_qp(&inp, &bounds, &spec.weights);
                let loose_b = ControllerBounds { gamma_max: bounds.gamma_max + extra, ..bounds };
                let loose = assemble_qp(&inp, &loose_b, &spec.weights);
                let a = solve_qp(&tight.problem).unwrap();
                let b = solve_qp(&loose.problem).unwrap();
                if a.status == QpStatus::Optimal {
                    prop_assert_eq!(b.status, QpStatus::Optimal);
                    prop_assert!(loose.cost(&b.x) <= tight.cost(&a.x) + 1e-9);
                    prop_assert!(kkt_residuals(&loose.problem, &b).certified());
                }
            }
        }

        #[test]
        fn accepted_commands_are_viable(t in 0.0f64..0.12, dvx in -1.0f64..1.0, dvy in -0.5f64..0.5) {
            let spec = running();
            let mut inp = inputs_at(&spec, StanceSide::Right, t);
            inp.state.com_vel += Vec3::new(dvx, dvy, 0.0);
            inp.state.dcm = inp.state.com + inp.state.com_vel / spec.omega;
            if let Ok(out) = controller_tick(&inp) {
                let c = out.command;
                prop_assert!(c.b.x >= spec.b_x_min - 1e-9 && c.b.x <= spec.b_x_max + 1e-9);
                prop_assert!(c.b.y >= -spec.b_y_in_max - 1e-9 && c.b.y <= spec.b_y_out_max + 1e-9);
                prop_assert!(c.gamma >= out.bounds.gamma_min - 1e-9);
            }
        }
    }
}
