//! Acceptance checks, one line of output each. Runs without the libtest
//! harness so every check reports even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use gait_cli::config::Sweep;
use gait_cli::simulate::{cmd_simulate, run_sweep, SolveTimes};
use gait_cli::ConfigDocument;
use gait_core::closed_form::{flight_flow, propagate_stance, stance_flow};
use gait_core::controller::{assemble_qp, controller_bounds, flight_bounds, gamma_bounds};
use gait_core::oracle::{brute_force_qp, integrate_stance_rk4};
use gait_core::sim::{
    apply_disturbance, friction_margin, run_scenario, Disturbance, GaitKind, Scenario, StepRecord, Terrain,
    TrajectoryLog,
};
use gait_core::{
    controller_tick, kkt_residuals, solve_qp, CentroidalState, ControllerInputs, GaitSpec, Landing, Mode, NominalGait,
    Phase, QpStatus, StanceSide, StepContext, Vec2, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn running(vx: f64) -> GaitSpec {
    GaitSpec::running().with_velocity(Vec3::new(vx, 0.0, 0.0))
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

fn steady_log(kind: GaitKind, vx: f64, steps: f64) -> TrajectoryLog {
    let spec = match kind {
        GaitKind::Running => running(vx),
        GaitKind::Walking => GaitSpec::lipm_walking(0.32).with_velocity(Vec3::new(vx, 0.0, 0.0)),
    };
    let t_nom = NominalGait::new(&spec).unwrap().t_nom;
    run_scenario(&Scenario::steady(kind, spec.v_des, (steps + 0.5) * t_nom)).unwrap().log
}

fn closed_form_vs_rk4() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut pos, mut vel) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let omega = rng.random_range(5.0..25.0);
        let vrp0 = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.0..0.2));
        let dx = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let v = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let s0 = CentroidalState::new(vrp0 + dx, v, omega, 0.0, Phase::Stance).unwrap();
        let ctx = StepContext {
            vrp0,
            omega,
            gamma: (omega * 0.5).exp(),
            t_f: 0.0,
            stance_side: StanceSide::Right,
            g: 9.81,
        };
        let exact = propagate_stance(&s0, &ctx, 0.5).unwrap();
        let rk = integrate_stance_rk4(&s0, &vrp0, omega, 0.5, 1e-5);
        pos = pos.max((exact.com - rk.com).amax());
        vel = vel.max((exact.com_vel - rk.com_vel).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(pos < 1e-8, "position error {pos:.3e} m");
    ensure!(vel < 1e-7, "velocity error {vel:.3e} m/s");
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("max error {pos:.2e} m, {vel:.2e} m/s over 100 draws in {secs:.2} s"))
}

fn lipm_degeneracy() -> Check {
    let spec = GaitSpec::lipm_walking(0.32).with_velocity(Vec3::new(0.3, 0.1, 0.0));
    let nominal = NominalGait::new(&spec).unwrap();
    ensure!(nominal.mode == Mode::LipmWalking, "mode {:?}", nominal.mode);
    ensure!(nominal.t_f_nom == 0.0, "T_f nominal {}", nominal.t_f_nom);
    let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
    let mut drift = 0.0f64;
    for side in [StanceSide::Right, StanceSide::Left] {
        let s0 = nominal.initial_state(side, &vrp0).unwrap();
        for k in 0..=1000 {
            let t = nominal.t_s_nom * k as f64 / 1000.0;
            drift = drift.max((stance_flow(&s0, &vrp0, spec.omega, t).com.z - s0.com.z).abs());
        }
    }
    let log = steady_log(GaitKind::Walking, 0.3, 12.0);
    ensure!(log.succeeded(), "walking run failed");
    let z0 = log.ticks[0].com.z;
    let sim_drift = log.ticks.iter().map(|r| (r.com.z - z0).abs()).fold(0.0, f64::max);
    ensure!(drift < 1e-10 && sim_drift < 1e-10, "height drift {drift:.2e} / {sim_drift:.2e}");
    ensure!(log.steps.iter().all(|s| s.t_f == 0.0), "walking step with flight");
    Ok(format!("height drift {drift:.1e} m closed form, {sim_drift:.1e} m simulated; T_f nominal = 0"))
}

fn periodicity() -> Check {
    let spec = running(0.5);
    let nominal = NominalGait::new(&spec).unwrap();
    let log = steady_log(GaitKind::Running, 0.5, 20.0);
    ensure!(log.succeeded() && log.steps.len() >= 20, "{} steps, failure {:?}", log.steps.len(), log.failure);
    let mut b_err = 0.0f64;
    for s in &log.steps[..20] {
        b_err = b_err.max((s.b - nominal.b(s.side)).amax());
    }
    ensure!(b_err < 1e-8, "b error {b_err:.3e}");
    ensure!(log.steps[..20].windows(2).all(|w| w[0].b.y * w[1].b.y < 0.0), "b_y does not alternate");
    let mut sym = 0.0f64;
    for s in &log.steps[..20] {
        let vrp = s.foothold + Vec3::new(0.0, 0.0, spec.vrp_height());
        let takeoff = log
            .ticks
            .iter()
            .find(|r| r.step == s.step && r.event.contains("takeoff"))
            .ok_or("missing take-off")?;
        let (start, end) = (s.com_start - vrp, takeoff.com - vrp);
        sym = sym.max((start.abs() - end.abs()).amax());
    }
    ensure!(sym < 1e-9, "stance asymmetry {sym:.3e}");
    Ok(format!("20 steps: b error {b_err:.1e}, |x_Ts - r| vs |x_0 - r| {sym:.1e}"))
}

fn average_velocity() -> Check {
    let mut worst = 0.0f64;
    for vx in [0.2, 0.5, 1.0] {
        let log = steady_log(GaitKind::Running, vx, 20.0);
        ensure!(log.succeeded() && log.steps.len() >= 20, "v = {vx}: run failed");
        let (first, last) = (&log.steps[0], &log.steps[19]);
        let v = (last.com_end - first.com_start) / (last.t_end - first.t_start);
        let err = (v.x - vx).abs().max(v.y.abs());
        ensure!(err < 1e-6, "v = {vx}: realized ({}, {})", v.x, v.y);
        worst = worst.max(err);
    }
    Ok(format!("worst error {worst:.1e} m/s over v_x in 0.2, 0.5, 1.0"))
}

fn bound_correctness() -> Check {
    let spec = running(0.3);
    let nominal = NominalGait::new(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut rise, mut top, mut hi, mut lo) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut n_top, mut n_hi, mut n_lo) = (0, 0, 0);
    for k in 0..100 {
        let side = if k % 2 == 0 { StanceSide::Right } else { StanceSide::Left };
        let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
        let ctx = stance_ctx(&spec, &nominal, side, vrp0);
        let s0 = nominal.initial_state(side, &vrp0).unwrap();
        let t = rng.random_range(0.2..0.8) * nominal.t_s_nom;
        let dv = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let state = apply_disturbance(&stance_flow(&s0, &vrp0, spec.omega, t), &dv, spec.omega);
        let (g_min, g_max) = gamma_bounds(&state, &ctx, &spec, Mode::Running, 0.0).map_err(|e| e.to_string())?;
        let at = |gamma: f64| stance_flow(&state, &vrp0, spec.omega, gamma.ln() / spec.omega - state.t);
        rise = rise.max(-at(g_min).com_vel.z);
        if g_max.is_finite() {
            top = top.max((at(g_max).com.z - spec.z_max).abs());
            n_top += 1;
        }
        let upper = if g_max.is_finite() { g_max } else { 3.0 * g_min };
        let gamma = g_min + rng.random_range(0.0..1.0) * (upper - g_min);
        let to = CentroidalState { phase: Phase::Flight, ..at(gamma) };
        let Ok((tf_min, tf_max)) = flight_bounds(&state, &ctx, &spec, to.dcm.z, to.com_vel.z, 0.0) else {
            continue;
        };
        let apex = to.com.z + to.com_vel.z.max(0.0).powi(2) / (2.0 * spec.g);
        if apex >= spec.z_max {
            hi = hi.max((flight_flow(&to, spec.omega, spec.g, tf_min).com.z - spec.z_max).abs());
            n_hi += 1;
        }
        lo = lo.max((flight_flow(&to, spec.omega, spec.g, tf_max).com.z - spec.z_min).abs());
        n_lo += 1;
    }
    ensure!(rise <= 1e-9, "descending at Gamma_min: {rise:.3e}");
    ensure!(top <= 1e-9, "height at Gamma_max off by {top:.3e}");
    ensure!(hi <= 1e-9 && lo <= 1e-9, "landing heights off by {hi:.3e} / {lo:.3e}");
    ensure!(n_top >= 50 && n_hi >= 20 && n_lo >= 50, "too few cases: {n_top} / {n_hi} / {n_lo}");
    Ok(format!(
        "100 states: -z' at Gamma_min {:.1e}, z_max error {top:.1e} ({n_top}), landing errors {hi:.1e} ({n_hi}) / {lo:.1e} ({n_lo})",
        rise.max(0.0)
    ))
}

fn qp_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut gap, mut kkt, mut fixed) = (0.0f64, 0.0f64, 0.0f64);
    let (mut solved, mut infeasible) = (0, 0);
    for k in 0..1000 {
        if solved == 50 {
            break;
        }
        let spec = if k % 3 == 2 {
            GaitSpec::lipm_walking(0.32).with_velocity(Vec3::new(0.3, 0.0, 0.0))
        } else {
            running(0.5)
        };
        let nominal = NominalGait::new(&spec).unwrap();
        let side = if k % 2 == 0 { StanceSide::Right } else { StanceSide::Left };
        let vrp0 = Vec3::new(0.1, -0.05, spec.vrp_height());
        let s0 = nominal.initial_state(side, &vrp0).unwrap();
        let t = rng.random_range(0.0..nominal.t_nom * 0.95);
        let base = if t < nominal.t_s_nom {
            stance_flow(&s0, &vrp0, spec.omega, t)
        } else {
            let ts = stance_flow(&s0, &vrp0, spec.omega, nominal.t_s_nom);
            flight_flow(&CentroidalState { phase: Phase::Flight, ..ts }, spec.omega, spec.g, t - nominal.t_s_nom)
        };
        let mut inp = ControllerInputs {
            state: base,
            ctx: stance_ctx(&spec, &nominal, side, vrp0),
            u0: Vec2::new(vrp0.x, vrp0.y),
            nominal,
            spec,
            landing: Landing::from_nominal(&nominal),
        };
        fixed = fixed.max(controller_tick(&inp).map_err(|e| e.to_string())?.objective);
        let dv = Vec3::new(rng.random_range(-1.2..1.2), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2));
        inp.state = apply_disturbance(&base, &dv, spec.omega);
        let Ok(bounds) = controller_bounds(&inp) else { continue };
        let asm = assemble_qp(&inp, &bounds, &spec.weights);
        let sol = solve_qp(&asm.problem).map_err(|e| e.to_string())?;
        let oracle = brute_force_qp(&asm.problem, 1e-9);
        match (sol.status, oracle) {
            (QpStatus::Optimal, Some(o)) => {
                solved += 1;
                gap = gap.max((sol.objective - o.objective).abs());
                let r = kkt_residuals(&asm.problem, &sol);
                kkt = kkt.max(r.stationarity.max(r.primal_eq).max(r.primal_in).max(r.complementarity).max(r.dual));
            }
            (QpStatus::Infeasible, None) => infeasible += 1,
            (status, oracle) => {
                return Err(format!("case {k}: solver {status:?}, oracle {:?}", oracle.map(|o| o.objective)))
            }
        }
    }
    ensure!(solved == 50, "only {solved} solvable problems");
    ensure!(gap < 1e-6, "objective gap {gap:.3e}");
    ensure!(kkt < 1e-8, "KKT residual {kkt:.3e}");
    ensure!(fixed < 1e-10, "nominal objective {fixed:.3e}");
    Ok(format!(
        "50 problems: objective gap {gap:.1e}, KKT {kkt:.1e}, nominal objective {fixed:.1e} ({infeasible} infeasible agreed)"
    ))
}

fn solve_time() -> Check {
    let mut sc = Scenario::steady(GaitKind::Running, Vec3::new(0.4, 0.0, 0.0), 10.0);
    sc.terrain = Terrain { max_height: 0.02, cell_size: 0.1, seed: 4 };
    sc.disturbances = vec![
        Disturbance { t: 2.0, dv: Vec3::new(0.8, 0.2, 0.0) },
        Disturbance { t: 6.0, dv: Vec3::new(-0.5, -0.3, 0.0) },
    ];
    let out = run_scenario(&sc).map_err(|e| e.to_string())?;
    ensure!(out.log.succeeded(), "run failed: {:?}", out.log.failure);
    let t = SolveTimes::from_samples(&out.solve_times).ok_or("no solves")?;
    ensure!(t.count >= 9900, "{} ticks", t.count);
    ensure!(t.median < 1e-3 && t.p99 < 2e-3, "median {:.3e} s, p99 {:.3e} s", t.median, t.p99);
    Ok(format!(
        "{} solves: median {:.1} us, p99 {:.1} us",
        t.count,
        t.median * 1e6,
        t.p99 * 1e6
    ))
}

fn within_offset_bounds(s: &StepRecord, spec: &GaitSpec) -> bool {
    let dir = s.side.next_foot_direction();
    let tol = 1e-9;
    s.b.x >= spec.b_x_min - tol
        && s.b.x <= spec.b_x_max + tol
        && dir * s.b.y >= -spec.b_y_in_max - tol
        && dir * s.b.y <= spec.b_y_out_max + tol
}

fn run_to_walk_scenario() -> Check {
    let doc = ConfigDocument::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper_fig.toml"))
        .map_err(|e| e.to_string())?;
    let sc = doc.scenario().map_err(|e| e.to_string())?;
    let log = run_scenario(&sc).map_err(|e| e.to_string())?.log;
    ensure!(log.succeeded(), "failed: {:?}", log.failure);
    let nominal_t = |s: &StepRecord| {
        let e = sc.command_at(s.t_start);
        let spec = sc.gaits.get(s.gait).with_velocity(e.v_des).with_omega(s.omega);
        NominalGait::new(&spec).unwrap().t_nom
    };
    let transition = |j: usize| log.steps.get(j + 1).is_some_and(|n| n.gait != log.steps[j].gait);
    let mut notes = Vec::new();
    for d in &sc.disturbances {
        let k = log
            .steps
            .iter()
            .position(|s| s.t_start <= d.t && d.t < s.t_end)
            .ok_or(format!("no step spans the push at {}", d.t))?;
        let pushed = &log.steps[k];
        let dev = (pushed.duration() - nominal_t(pushed)).abs() / nominal_t(pushed);
        ensure!(dev > 0.05, "push at {}: step time moved only {:.2}%", d.t, dev * 100.0);
        let last = (k + 3).min(log.steps.len() - 1);
        let steady = |j: usize| {
            let s = &log.steps[j];
            transition(j) || (s.duration() - nominal_t(s)).abs() < 0.01 * nominal_t(s)
        };
        let settled = (k + 1..=last)
            .find(|&j| !transition(j) && (j..=last).all(steady))
            .ok_or(format!("push at {}: step time not back within 3 steps", d.t))?;
        notes.push(format!("push {}: T {:+.1}% then nominal after {} step(s)", d.t, 100.0 * (pushed.duration() / nominal_t(pushed) - 1.0), settled - k));
    }
    for s in &log.steps {
        ensure!(within_offset_bounds(s, sc.gaits.get(s.gait)), "step {} offset {} outside bounds", s.step, s.b);
    }
    for r in &log.ticks {
        let spec = sc.gaits.get(r.gait);
        let dir = r.side.next_foot_direction();
        let ok = r.b.x >= spec.b_x_min - 1e-9
            && r.b.x <= spec.b_x_max + 1e-9
            && dir * r.b.y >= -spec.b_y_in_max - 1e-9
            && dir * r.b.y <= spec.b_y_out_max + 1e-9;
        ensure!(ok, "commanded offset {} at t = {} outside bounds", r.b, r.t);
    }
    Ok(format!("{} steps, no failure; {}", log.steps.len(), notes.join("; ")))
}

fn viability_sweep() -> Check {
    let base = Scenario {
        terrain: Terrain::flat(),
        ..Scenario::steady(GaitKind::Running, Vec3::new(0.3, 0.0, 0.0), 3.0)
    };
    let sweep = Sweep {
        t: 0.95,
        direction: Vec3::new(1.0, 0.0, 0.0),
        magnitudes: (0..=40).map(|k| 0.1 * k as f64).collect(),
    };
    let report = run_sweep(&base, &sweep).map_err(|e| e.to_string())?;
    let onset = report.onset.ok_or("no failure up to 4 m/s")?;
    ensure!(report.monotone, "failure onset is not monotone");
    let spec = &base.gaits.running;
    for row in report.rows.iter().filter(|r| r.succeeded) {
        let mut sc = base.clone();
        sc.disturbances.push(Disturbance { t: sweep.t, dv: sweep.direction * row.magnitude });
        let log = run_scenario(&sc).unwrap().log;
        ensure!(
            log.steps.iter().all(|s| within_offset_bounds(s, spec)),
            "push {} recovered with an offset outside bounds",
            row.magnitude
        );
    }
    let failed_at = report.rows.iter().find(|r| !r.succeeded).and_then(|r| r.failure_t);
    Ok(format!(
        "{} pushes: recovered below {onset:.1} m/s, failed from {onset:.1} m/s on (first failure at t = {:?})",
        report.rows.len(),
        failed_at
    ))
}

fn friction_monitor() -> Check {
    let spec = GaitSpec::lipm_walking(0.32).with_velocity(Vec3::new(0.3, 0.0, 0.0));
    let nominal = NominalGait::new(&spec).unwrap();
    let vrp0 = Vec3::new(0.0, 0.0, spec.vrp_height());
    let ctx = stance_ctx(&spec, &nominal, StanceSide::Right, vrp0);
    let s0 = nominal.initial_state(StanceSide::Right, &vrp0).unwrap();
    let closed_form = (0..=200)
        .map(|k| friction_margin(&stance_flow(&s0, &vrp0, spec.omega, nominal.t_s_nom * k as f64 / 200.0), &ctx, 0.8))
        .fold(f64::INFINITY, f64::min);
    ensure!(closed_form > 0.0, "closed-form margin {closed_form}");
    let margin = |mu: f64| {
        let mut sc = Scenario::steady(GaitKind::Walking, spec.v_des, 3.0);
        sc.gaits.walking.mu_s = mu;
        let log = run_scenario(&sc).unwrap().log;
        let stance: Vec<f64> = log.ticks.iter().map(|r| r.friction_margin).collect();
        (stance.iter().all(|m| *m > 0.0), log.min_friction_margin())
    };
    let (all_positive, m08) = margin(0.8);
    ensure!(all_positive, "non-positive margin at mu = 0.8 (min {m08})");
    let mins: Vec<f64> = [0.8, 0.6, 0.4, 0.2, 0.1].into_iter().map(|mu| margin(mu).1).collect();
    ensure!(mins.windows(2).all(|w| w[1] < w[0]), "margins not decreasing: {mins:?}");
    Ok(format!("min margin {m08:.4} m at mu = 0.8; minima {mins:.4?} for mu 0.8 to 0.1"))
}

fn determinism() -> Check {
    let mut doc = ConfigDocument::default().with_seed(Some(42));
    doc.scenario.terrain.max_height = 0.02;
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cmd_simulate(&doc, a.path()).map_err(|e| e.to_string())?;
    cmd_simulate(&doc, b.path()).map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for f in ["ticks.csv", "steps.csv", "summary.json"] {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{f} differs");
        bytes += x.len();
    }
    Ok(format!("{bytes} bytes of artifacts identical across two runs"))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 11] = [
        ("closed form vs RK4", closed_form_vs_rk4),
        ("LIPM degeneracy", lipm_degeneracy),
        ("periodicity and symmetry", periodicity),
        ("average velocity", average_velocity),
        ("Gamma and flight bounds", bound_correctness),
        ("QP optimality", qp_optimality),
        ("solve time", solve_time),
        ("run-to-walk push scenario", run_to_walk_scenario),
        ("viability sweep", viability_sweep),
        ("friction monitor", friction_monitor),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance check(s) failed");
        ExitCode::FAILURE
    }
}
