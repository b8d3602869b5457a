//! Periodic reference gait synthesized from a [`GaitSpec`].
//!
//! Each horizontal axis of a step is an affine map on the pair
//! `(x - r_vrp, ξ - r_vrp)` taken at the start of the step. The forward axis
//! has the same displacement every step and has a closed-form fixed point.
//! The lateral axis alternates the pelvis-width term, so its reference is the
//! fixed point of the two-step map, which stays exact for any lateral speed.
//! The vertical axis is fixed by the requirement that the CoM and DCM return
//! to their initial heights at touchdown.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::centroidal::{CentroidalState, GaitSpec, Phase, StanceSide, Vec2, Vec3};
use crate::error::{GaitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    LipmWalking,
    Walking,
    Sneaking,
    Running,
}

impl Mode {
    /// Mode of a gait with CoM-over-VRP offset `dz0` and flight time `t_f`.
    pub fn classify(dz0: f64, t_f: f64) -> Mode {
        if dz0 == 0.0 {
            Mode::LipmWalking
        } else if dz0 < 0.0 {
            Mode::Walking
        } else if t_f > 0.0 {
            Mode::Running
        } else {
            Mode::Sneaking
        }
    }

    pub fn has_flight(self) -> bool {
        self == Mode::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LipmWalking => "lipm_walking",
            Mode::Walking => "walking",
            Mode::Sneaking => "sneaking",
            Mode::Running => "running",
        }
    }
}

/// Mode label plus the natural frequency `ω₀ = √(g / (z₀ - z_cop))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub omega0: f64,
}

/// CoM and DCM relative to the stance VRP at the start of a nominal step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOffsets {
    pub com: Vec3,
    pub dcm: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalGait {
    pub omega: f64,
    pub g: f64,
    pub gamma_nom: f64,
    pub t_s_nom: f64,
    pub t_f_nom: f64,
    pub t_nom: f64,
    pub du_right: Vec2,
    pub du_left: Vec2,
    pub vel_ts_right: Vec3,
    pub vel_ts_left: Vec3,
    /// `ξ_T - r_vrp,T` at the end of a right-stance step.
    pub b_right: Vec3,
    pub b_left: Vec3,
    pub start_right: StepOffsets,
    pub start_left: StepOffsets,
    pub mode: Mode,
    pub omega0: f64,
}

impl NominalGait {
    pub fn new(spec: &GaitSpec) -> Result<Self> {
        spec.validate()?;
        let gamma = spec.gamma_nom();
        if gamma <= 1.0 {
            return Err(GaitError::DegenerateGait(format!("Gamma = {gamma} must exceed 1")));
        }
        let omega = spec.omega;
        let t_f = nominal_flight_time(spec);
        let t = spec.t_s_nom + t_f;
        let du_r = nominal_step_displacement(spec, StanceSide::Right);
        let du_l = nominal_step_displacement(spec, StanceSide::Left);

        // Forward axis: identical every step.
        let vx = spec.v_des.x * t / (t_f + 2.0 * (gamma - 1.0) / (omega * (gamma + 1.0)));
        let bx = (du_r.x - vx * t_f) / (gamma - 1.0);
        let px = 0.5 * (1.0 - gamma) * bx;

        // Lateral axis: two-step periodic orbit.
        let (sr, sl) = lateral_orbit(omega, gamma, t_f, du_r.y, du_l.y)?;
        let vy = |s: Vector2<f64>| {
            let (p, d) = stance_end(s, gamma);
            omega * (d - p)
        };

        // Vertical axis.
        let bz = 2.0 * spec.dz0 / (gamma + 1.0);
        let vz = omega * (gamma - 1.0) * spec.dz0 / (gamma + 1.0);

        let start = |py: f64, dy: f64| StepOffsets {
            com: Vec3::new(px, py, spec.dz0),
            dcm: Vec3::new(bx, dy, bz),
        };
        let report = classify_mode(spec);
        Ok(Self {
            omega,
            g: spec.g,
            gamma_nom: gamma,
            t_s_nom: spec.t_s_nom,
            t_f_nom: t_f,
            t_nom: t,
            du_right: du_r,
            du_left: du_l,
            vel_ts_right: Vec3::new(vx, vy(sr), vz),
            vel_ts_left: Vec3::new(vx, vy(sl), vz),
            b_right: Vec3::new(bx, sl.y, bz),
            b_left: Vec3::new(bx, sr.y, bz),
            start_right: start(sr.x, sr.y),
            start_left: start(sl.x, sl.y),
            mode: report.mode,
            omega0: report.omega0,
        })
    }

    pub fn du(&self, side: StanceSide) -> Vec2 {
        match side {
            StanceSide::Right => self.du_right,
            StanceSide::Left => self.du_left,
        }
    }

    pub fn vel_ts(&self, side: StanceSide) -> Vec3 {
        match side {
            StanceSide::Right => self.vel_ts_right,
            StanceSide::Left => self.vel_ts_left,
        }
    }

    pub fn b(&self, side: StanceSide) -> Vec3 {
        match side {
            StanceSide::Right => self.b_right,
            StanceSide::Left => self.b_left,
        }
    }

    pub fn start(&self, side: StanceSide) -> StepOffsets {
        match side {
            StanceSide::Right => self.start_right,
            StanceSide::Left => self.start_left,
        }
    }

    /// Periodic state at the start of a step whose stance VRP is `vrp0`.
    pub fn initial_state(&self, side: StanceSide, vrp0: &Vec3) -> Result<CentroidalState> {
        let s = self.start(side);
        let vel = self.omega * (s.dcm - s.com);
        CentroidalState::new(vrp0 + s.com, vel, self.omega, 0.0, Phase::Stance)
    }

    /// Nominal CoM relative to the stance VRP, `t` seconds into the stance.
    ///
    /// Per axis this is `½(e^{ωt}(ξ₀ - r) + e^{-ωt}(2(x₀ - r) - (ξ₀ - r)))`,
    /// which equals `½(e^{ωt} + α Γ e^{-ωt})(ξ₀ - r)` with `α = (-1, 1, 1)`
    /// whenever the lateral speed is zero.
    pub fn com_offset(&self, side: StanceSide, t: f64) -> Result<Vec3> {
        if !(0.0..=self.t_s_nom).contains(&t) {
            return Err(GaitError::OutOfRange {
                what: "nominal stance clock",
                value: t,
                min: 0.0,
                max: self.t_s_nom,
            });
        }
        let s = self.start(side);
        let grow = (self.omega * t).exp();
        let decay = (-self.omega * t).exp();
        Ok(0.5 * (grow * s.dcm + decay * (2.0 * s.com - s.dcm)))
    }

    /// Signed margins of the nominal offset and step against the bounds for
    /// `side`; a negative entry names a violated bound.
    pub fn bound_margins(&self, spec: &GaitSpec, side: StanceSide) -> Vec<(&'static str, f64)> {
        let b = self.b(side);
        let v = self.vel_ts(side);
        let reach = self.du(side) - self.t_f_nom * Vec2::new(v.x, v.y);
        let dir = side.next_foot_direction();
        let by = dir * b.y;
        let dy = dir * reach.y;
        vec![
            ("b_x_min", b.x - spec.b_x_min),
            ("b_x_max", spec.b_x_max - b.x),
            ("b_y_in_max", by + spec.b_y_in_max),
            ("b_y_out_max", spec.b_y_out_max - by),
            ("du_x_min", reach.x - spec.du_min.x),
            ("du_x_max", spec.du_max.x - reach.x),
            ("du_y_min", dy - spec.du_min.y),
            ("du_y_max", spec.du_max.y - dy),
        ]
    }
}

/// End-of-stance `(x - r, ξ - r)` for one horizontal axis.
fn stance_end(s: Vector2<f64>, gamma: f64) -> (f64, f64) {
    let (p, d) = (s.x, s.y);
    (0.5 * (gamma * d + (2.0 * p - d) / gamma), gamma * d)
}

/// Linear part of one horizontal step map on `(x - r, ξ - r)`.
fn step_matrix(omega: f64, gamma: f64, t_f: f64) -> Matrix2<f64> {
    let stance = Matrix2::new(1.0 / gamma, 0.5 * (gamma - 1.0 / gamma), 0.0, gamma);
    let c = omega * t_f;
    let flight = Matrix2::new(1.0 - c, c, -c, 1.0 + c);
    flight * stance
}

/// Start-of-step lateral offsets `(y - r, ξ_y - r)` for the right and left stances.
fn lateral_orbit(omega: f64, gamma: f64, t_f: f64, du_r: f64, du_l: f64) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let m = step_matrix(omega, gamma, t_f);
    let k_r = -Vector2::new(du_r, du_r);
    let k_l = -Vector2::new(du_l, du_l);
    let lhs = Matrix2::identity() - m * m;
    let sr = lhs
        .lu()
        .solve(&(m * k_r + k_l))
        .ok_or_else(|| GaitError::DegenerateGait("lateral step map has no periodic orbit".into()))?;
    let sl = m * sr + k_r;
    Ok((sr, sl))
}

/// `T_f = 2ω(Γ-1)/(g(Γ+1))·dz0`, or zero when the CoM starts at or below the VRP.
pub fn nominal_flight_time(spec: &GaitSpec) -> f64 {
    if spec.dz0 <= 0.0 {
        return 0.0;
    }
    let gamma = spec.gamma_nom();
    2.0 * spec.omega * (gamma - 1.0) / (spec.g * (gamma + 1.0)) * spec.dz0
}

/// `(v_x T, v_y T - (-1)^n l_p)` for the step whose stance foot is `side`.
pub fn nominal_step_displacement(spec: &GaitSpec, side: StanceSide) -> Vec2 {
    let t = spec.t_s_nom + nominal_flight_time(spec);
    Vec2::new(spec.v_des.x * t, spec.v_des.y * t - side.sign() * spec.pelvis_width)
}

pub fn nominal_takeoff_velocity(spec: &GaitSpec, side: StanceSide) -> Result<Vec3> {
    Ok(NominalGait::new(spec)?.vel_ts(side))
}

pub fn nominal_dcm_offset(spec: &GaitSpec, side: StanceSide) -> Result<Vec3> {
    Ok(NominalGait::new(spec)?.b(side))
}

/// Nominal CoM relative to the stance VRP at `t` into the stance of `side`.
pub fn nominal_com_trajectory(spec: &GaitSpec, side: StanceSide, t: f64) -> Result<Vec3> {
    NominalGait::new(spec)?.com_offset(side, t)
}

pub fn classify_mode(spec: &GaitSpec) -> ModeReport {
    let height = spec.com_height();
    let omega0 = if height > 0.0 { (spec.g / height).sqrt() } else { f64::NAN };
    ModeReport {
        mode: Mode::classify(spec.dz0, nominal_flight_time(spec)),
        omega0,
    }
}

/// `Fr = (v_x² + v_y²)/(g d)`.
pub fn froude_number(v: &Vec3, d: f64, g: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(GaitError::InvalidInput(format!("Froude length {d} must be positive")));
    }
    Ok((v.x * v.x + v.y * v.y) / (g * d))
}

/// Froude number of the commanded velocity, with `d` the distance from the
/// contact point to the CoM at the start of a nominal step.
pub fn gait_froude_number(spec: &GaitSpec, gait: &NominalGait) -> Result<f64> {
    let rel_cop = gait.start_right.com + Vec3::new(0.0, 0.0, spec.vrp_height());
    froude_number(&spec.v_des, rel_cop.norm(), spec.g)
}
