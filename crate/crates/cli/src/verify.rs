//! Oracle suites behind the `verify` command. Each suite reports the largest
//! residual it measured next to its tolerance; a suite that cannot run
//! reports the error instead of aborting the others.

use gait_core::closed_form::{flight_flow, propagate_stance, stance_flow};
use gait_core::controller::{assemble_qp, controller_bounds, flight_bounds, gamma_bounds};
use gait_core::oracle::{brute_force_qp, integrate_stance_rk4};
use gait_core::sim::{apply_disturbance, run_scenario, GaitKind, Scenario};
use gait_core::{
    kkt_residuals, solve_qp, CentroidalState, ControllerInputs, GaitSpec, Landing, NominalGait, Phase, QpStatus,
    StanceSide, StepContext, Vec2, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ConfigDocument;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub tolerance_scale: f64,
    pub suites: Vec<SuiteResult>,
}

type Measured = std::result::Result<Vec<(String, f64, f64)>, String>;

fn measure(name: &str, value: f64, tolerance: f64) -> (String, f64, f64) {
    (name.to_string(), value, tolerance)
}

fn stance_ctx(spec: &GaitSpec, nominal: &NominalGait, side: StanceSide, vrp0: Vec3) -> StepContext {
    StepContext {
        vrp0,
        omega: spec.omega,
        gamma: nominal.gamma_nom,
        t_f: nominal.t_f_nom,
        stance_side: side,
        g: spec.g,
    }
}

fn running_spec(doc: &ConfigDocument) -> GaitSpec {
    let v = doc
        .scenario
        .schedule
        .iter()
        .find(|e| e.gait == GaitKind::Running)
        .map_or(Vec3::new(0.5, 0.0, 0.0), |e| e.v_des);
    doc.scenario.gaits.running.with_velocity(v)
}

fn closed_form_suite(doc: &ConfigDocument, rng: &mut ChaCha8Rng) -> Measured {
    let (mut pos, mut vel) = (0.0f64, 0.0f64);
    for _ in 0..doc.verify.draws {
        let omega = rng.random_range(5.0..25.0);
        let vrp0 = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.0..0.2));
        let offset = Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
        let v = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let s0 = CentroidalState::new(vrp0 + offset, v, omega, 0.0, Phase::Stance).map_err(|e| e.to_string())?;
        let ctx = StepContext {
            vrp0,
            omega,
            gamma: (omega * 0.5).exp(),
            t_f: 0.0,
            stance_side: StanceSide::Right,
            g: 9.81,
        };
        let exact = propagate_stance(&s0, &ctx, 0.5).map_err(|e| e.to_string())?;
        let rk = integrate_stance_rk4(&s0, &vrp0, omega, 0.5, 1e-5);
        let scale = 1.0 + exact.com.amax();
        pos = pos.max((exact.com - rk.com).amax() / scale);
        vel = vel.max((exact.com_vel - rk.com_vel).amax() / (scale * omega));
    }
    Ok(vec![measure("position_error", pos, 1e-8), measure("velocity_error", vel, 1e-7)])
}

fn lipm_suite(doc: &ConfigDocument) -> Measured {
    let spec = doc.scenario.gaits.walking.with_velocity(Vec3::new(0.3, 0.0, 0.0));
    let nominal = NominalGait::new(&spec).map_err(|e| e.to_string())?;
    let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
    let s0 = nominal.initial_state(StanceSide::Right, &vrp0).map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    for k in 0..=100 {
        let t = nominal.t_s_nom * k as f64 / 100.0;
        drift = drift.max((stance_flow(&s0, &vrp0, spec.omega, t).com.z - s0.com.z).abs());
    }
    Ok(vec![
        measure("height_drift", drift, 1e-10),
        measure("nominal_flight_time", nominal.t_f_nom.abs(), 0.0),
    ])
}

fn bounds_suite(doc: &ConfigDocument, rng: &mut ChaCha8Rng) -> Measured {
    let spec = running_spec(doc);
    let nominal = NominalGait::new(&spec).map_err(|e| e.to_string())?;
    let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
    let ctx = stance_ctx(&spec, &nominal, StanceSide::Right, vrp0);
    let s0 = nominal.initial_state(StanceSide::Right, &vrp0).map_err(|e| e.to_string())?;
    let (mut rise, mut top, mut land_hi, mut land_lo) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..doc.verify.draws {
        let t = rng.random_range(0.2..0.8) * nominal.t_s_nom;
        let mut state = stance_flow(&s0, &vrp0, spec.omega, t);
        let dv = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1));
        state = apply_disturbance(&state, &dv, spec.omega);
        let (g_min, g_max) = gamma_bounds(&state, &ctx, &spec, nominal.mode, 0.0).map_err(|e| e.to_string())?;
        let at = |gamma: f64| stance_flow(&state, &vrp0, spec.omega, gamma.ln() / spec.omega - state.t);
        rise = rise.max(-at(g_min).com_vel.z);
        if g_max.is_finite() {
            top = top.max((at(g_max).com.z - spec.z_max).abs());
        }
        let gamma = 0.5 * (g_min + g_max.min(3.0 * g_min));
        let to = CentroidalState { phase: Phase::Flight, ..at(gamma) };
        let (tf_min, tf_max) = match flight_bounds(&state, &ctx, &spec, to.dcm.z, to.com_vel.z, 0.0) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let apex_below = to.com.z + to.com_vel.z.max(0.0).powi(2) / (2.0 * spec.g) < spec.z_max;
        if !apex_below {
            land_hi = land_hi.max((flight_flow(&to, spec.omega, spec.g, tf_min).com.z - spec.z_max).abs());
        }
        land_lo = land_lo.max((flight_flow(&to, spec.omega, spec.g, tf_max).com.z - spec.z_min).abs());
    }
    Ok(vec![
        measure("takeoff_descent_at_gamma_min", rise.max(0.0), 1e-9),
        measure("takeoff_height_at_gamma_max", top, 1e-9),
        measure("landing_height_at_tf_min", land_hi, 1e-9),
        measure("landing_height_at_tf_max", land_lo, 1e-9),
    ])
}

fn qp_suite(doc: &ConfigDocument, rng: &mut ChaCha8Rng) -> Measured {
    let spec = running_spec(doc);
    let nominal = NominalGait::new(&spec).map_err(|e| e.to_string())?;
    let (mut gap, mut kkt, mut mismatches, mut fixed) = (0.0f64, 0.0f64, 0.0, 0.0f64);
    for k in 0..doc.verify.draws.div_ceil(2) {
        let side = if k % 2 == 0 { StanceSide::Right } else { StanceSide::Left };
        let u0 = Vec2::new(0.0, 0.0);
        let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
        let s0 = nominal.initial_state(side, &vrp0).map_err(|e| e.to_string())?;
        let t = rng.random_range(0.0..0.95) * nominal.t_s_nom;
        let base = stance_flow(&s0, &vrp0, spec.omega, t);
        let mut inp = ControllerInputs {
            state: base,
            ctx: stance_ctx(&spec, &nominal, side, vrp0),
            u0,
            nominal,
            spec,
            landing: Landing::from_nominal(&nominal),
        };
        let out = gait_core::controller_tick(&inp).map_err(|e| e.to_string())?;
        fixed = fixed.max(out.objective);
        let dv = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.4..0.4), 0.0);
        inp.state = apply_disturbance(&base, &dv, spec.omega);
        let Ok(bounds) = controller_bounds(&inp) else { continue };
        let asm = assemble_qp(&inp, &bounds, &spec.weights);
        let sol = solve_qp(&asm.problem).map_err(|e| e.to_string())?;
        let oracle = brute_force_qp(&asm.problem, 1e-9);
        match (sol.status, oracle) {
            (QpStatus::Optimal, Some(o)) => {
                gap = gap.max((sol.objective - o.objective).abs());
                let r = kkt_residuals(&asm.problem, &sol);
                kkt = kkt.max(r.stationarity.max(r.primal_eq).max(r.primal_in).max(r.complementarity).max(r.dual));
            }
            (QpStatus::Infeasible, None) => {}
            _ => mismatches += 1.0,
        }
    }
    Ok(vec![
        measure("objective_gap", gap, 1e-6),
        measure("kkt_residual", kkt, 1e-8),
        measure("status_mismatches", mismatches, 0.0),
        measure("nominal_objective", fixed, 1e-10),
    ])
}

fn periodicity_suite(doc: &ConfigDocument) -> Measured {
    let spec = running_spec(doc);
    let nominal = NominalGait::new(&spec).map_err(|e| e.to_string())?;
    let mut sc = Scenario::steady(GaitKind::Running, spec.v_des, 20.5 * nominal.t_nom);
    sc.gaits = doc.scenario.gaits;
    let log = run_scenario(&sc).map_err(|e| e.to_string())?.log;
    if let Some(f) = &log.failure {
        return Err(format!("undisturbed run failed at {}: {}", f.t, f.reason));
    }
    let b_err = log.steps.iter().map(|s| (s.b - nominal.b(s.side)).amax()).fold(0.0, f64::max);
    let even = log.steps.len() - log.steps.len() % 2;
    let first = &log.steps[0];
    let last = &log.steps[even - 1];
    let v = (last.com_end - first.com_start) / (last.t_end - first.t_start);
    let v_err = (v.x - spec.v_des.x).abs().max((v.y - spec.v_des.y).abs());
    Ok(vec![
        measure("dcm_offset_error", b_err, 1e-8),
        measure("mean_velocity_error", v_err, 1e-6),
        measure("missing_steps", 20.0 - (log.steps.len() as f64).min(20.0), 0.0),
    ])
}

fn finish(suite: &'static str, measured: Measured, scale: f64) -> SuiteResult {
    match measured {
        Ok(items) => {
            let measurements: Vec<Measurement> = items
                .into_iter()
                .map(|(name, value, tol)| Measurement {
                    passed: value <= tol * scale,
                    name,
                    value,
                    tolerance: tol * scale,
                })
                .collect();
            SuiteResult {
                suite,
                passed: measurements.iter().all(|m| m.passed),
                measurements,
                error: None,
            }
        }
        Err(e) => SuiteResult {
            suite,
            passed: false,
            measurements: Vec::new(),
            error: Some(e),
        },
    }
}

pub fn cmd_verify(doc: &ConfigDocument) -> VerifyReport {
    let scale = doc.verify.tolerance_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(doc.verify.seed);
    let suites = vec![
        finish("closed_form_vs_rk4", closed_form_suite(doc, &mut rng), scale),
        finish("lipm_degeneracy", lipm_suite(doc), scale),
        finish("gamma_and_flight_bounds", bounds_suite(doc, &mut rng), scale),
        finish("qp_vs_enumeration", qp_suite(doc, &mut rng), scale),
        finish("closed_loop_periodicity", periodicity_suite(doc), scale),
    ];
    VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        tolerance_scale: scale,
        suites,
    }
}
