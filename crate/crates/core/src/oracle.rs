//! Independent reference computations used to check the closed forms and the
//! QP solver: fixed-step numeric integration and brute-force active-set
//! enumeration. Nothing here is used on the control path.

use nalgebra::{DMatrix, DVector};

use crate::centroidal::{gravity_vec, CentroidalState, Phase, Vec3};
use crate::qp::QpProblem;

fn rk4<F>(x: Vec3, v: Vec3, h: f64, accel: F) -> (Vec3, Vec3)
where
    F: Fn(&Vec3) -> Vec3,
{
    let k1x = v;
    let k1v = accel(&x);
    let k2x = v + 0.5 * h * k1v;
    let k2v = accel(&(x + 0.5 * h * k1x));
    let k3x = v + 0.5 * h * k2v;
    let k3v = accel(&(x + 0.5 * h * k2x));
    let k4x = v + h * k3v;
    let k4v = accel(&(x + h * k3x));
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

fn integrate<F>(state: &CentroidalState, duration: f64, max_dt: f64, accel: F) -> (Vec3, Vec3)
where
    F: Fn(&Vec3) -> Vec3,
{
    let steps = (duration.abs() / max_dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let (mut x, mut v) = (state.com, state.com_vel);
    for _ in 0..steps {
        (x, v) = rk4(x, v, h, &accel);
    }
    (x, v)
}

/// Classic RK4 integration of `ẍ = ω²(x - r_vrp)` over `duration`.
pub fn integrate_stance_rk4(state: &CentroidalState, vrp: &Vec3, omega: f64, duration: f64, max_dt: f64) -> CentroidalState {
    let w2 = omega * omega;
    let (com, com_vel) = integrate(state, duration, max_dt, |x| w2 * (x - vrp));
    CentroidalState {
        com,
        com_vel,
        dcm: com + com_vel / omega,
        t: state.t + duration,
        phase: Phase::Stance,
    }
}

/// RK4 integration of free fall backwards in time by `duration`.
pub fn integrate_flight_backward(state: &CentroidalState, omega: f64, g: f64, duration: f64, max_dt: f64) -> CentroidalState {
    let gv = gravity_vec(g);
    let (com, com_vel) = integrate(state, -duration, max_dt, |_| gv);
    CentroidalState {
        com,
        com_vel,
        dcm: com + com_vel / omega,
        t: state.t - duration,
        phase: Phase::Flight,
    }
}

/// Result of the enumeration oracle.
#[derive(Debug, Clone)]
pub struct BruteForceOptimum {
    pub x: DVector<f64>,
    pub objective: f64,
    pub active: Vec<usize>,
}

/// Global optimum of a strictly convex QP by enumerating every candidate
/// active set of inequalities, solving the equality-constrained KKT system
/// for each, and keeping the best primal-feasible point.
///
/// Exponential in the number of inequalities; meant for the small controller
/// problems only. Returns `None` when no candidate is feasible.
pub fn brute_force_qp(p: &QpProblem, feas_tol: f64) -> Option<BruteForceOptimum> {
    let n = p.h.nrows();
    let me = p.a_eq.nrows();
    let mi = p.a_in.nrows();
    let max_active = n.saturating_sub(me).min(mi);
    let mut best: Option<BruteForceOptimum> = None;

    let mut subset: Vec<usize> = Vec::new();
    let mut consider = |active: &[usize]| {
        let k = me + active.len();
        let dim = n + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.q));
        for r in 0..k {
            let (row, b) = if r < me {
                (p.a_eq.row(r).into_owned(), p.b_eq[r])
            } else {
                let i = active[r - me];
                (p.a_in.row(i).into_owned(), p.b_in[i])
            };
            for c in 0..n {
                kkt[(n + r, c)] = row[c];
                kkt[(c, n + r)] = row[c];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return;
        };
        let x = sol.rows(0, n).into_owned();
        if !x.iter().all(|v| v.is_finite()) {
            return;
        }
        let eq_ok = (0..me).all(|r| (p.a_eq.row(r).dot(&x.transpose()) - p.b_eq[r]).abs() <= feas_tol);
        let in_ok = (0..mi).all(|r| p.a_in.row(r).dot(&x.transpose()) - p.b_in[r] >= -feas_tol);
        if !(eq_ok && in_ok) {
            return;
        }
        let objective = p.objective(&x);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(BruteForceOptimum {
                x,
                objective,
                active: active.to_vec(),
            });
        }
    };

    fn recurse(start: usize, mi: usize, max_active: usize, subset: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        visit(subset);
        if subset.len() == max_active {
            return;
        }
        for i in start..mi {
            subset.push(i);
            recurse(i + 1, mi, max_active, subset, visit);
            subset.pop();
        }
    }
    recurse(0, mi, max_active, &mut subset, &mut consider);
    best
}
