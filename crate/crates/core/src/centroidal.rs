//! Shared domain types and the algebraic maps between CoM state, DCM, CoP and VRP.
//!
//! Under the force-through-CoM virtual constraint the contact force is
//! `m ω² (x - r_cop)`, which turns the centroidal dynamics into the linear
//! system `ẍ = ω² (x - r_vrp)` in all three axes. Everything in this crate is
//! expressed in terms of that system.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, GaitError, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Gravity as a vector, pointing down the z axis.
pub fn gravity_vec(g: f64) -> Vec3 {
    Vec3::new(0.0, 0.0, -g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Stance,
    Flight,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Stance => "stance",
            Phase::Flight => "flight",
        }
    }
}

/// Which foot carries the current stance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceSide {
    /// `n = 1`
    Right,
    /// `n = 2`
    Left,
}

impl StanceSide {
    /// `(-1)^n`: `-1` for the right foot, `+1` for the left.
    pub fn sign(self) -> f64 {
        match self {
            StanceSide::Right => -1.0,
            StanceSide::Left => 1.0,
        }
    }

    /// Lateral direction of the next foothold relative to the stance foot.
    pub fn next_foot_direction(self) -> f64 {
        -self.sign()
    }

    pub fn other(self) -> Self {
        match self {
            StanceSide::Right => StanceSide::Left,
            StanceSide::Left => StanceSide::Right,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceSide::Right => "right",
            StanceSide::Left => "left",
        }
    }
}

/// CoM position/velocity with the derived DCM, plus the in-step clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidalState {
    pub com: Vec3,
    pub com_vel: Vec3,
    pub dcm: Vec3,
    /// Time since the start of the current step.
    pub t: f64,
    pub phase: Phase,
}

impl CentroidalState {
    pub fn new(com: Vec3, com_vel: Vec3, omega: f64, t: f64, phase: Phase) -> Result<Self> {
        let dcm = dcm_from_state(&com, &com_vel, omega)?;
        ensure_finite("step clock", &[t])?;
        if t < 0.0 {
            return Err(GaitError::InvalidInput(format!("step clock {t} is negative")));
        }
        Ok(Self {
            com,
            com_vel,
            dcm,
            t,
            phase,
        })
    }

    /// Recompute the DCM for a different frequency (used when ω changes at touchdown).
    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        self.dcm = dcm_from_state(&self.com, &self.com_vel, omega)?;
        Ok(self)
    }

    /// Largest component of `|ẋ - ω(ξ - x)|`.
    pub fn dcm_residual(&self, omega: f64) -> f64 {
        (self.com_vel - omega * (self.dcm - self.com)).amax()
    }
}

/// Relative weights of the step-adjustment cost terms: step location, Γ,
/// flight time and DCM offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub step: f64,
    pub gamma: f64,
    pub flight: f64,
    pub offset: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            step: 1.0,
            gamma: 1.0,
            flight: 1.0,
            offset: 1000.0,
        }
    }
}

/// Gait hyperparameters and physical bounds.
///
/// Heights (`z_min`, `z_max`) are measured from the ground under the current
/// stance foot. Lateral quantities (`du_min[1]`, `du_max[1]`, `b_y_*`) are
/// expressed for a right-foot stance, where the next foot lands to the left
/// (+y); they are mirrored for a left-foot stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSpec {
    pub omega: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    pub t_s_nom: f64,
    /// Nominal CoM height above the VRP at the start of a step, `z₀ - z_vrp,0`.
    pub dz0: f64,
    pub v_des: Vec3,
    pub pelvis_width: f64,
    pub du_min: Vec2,
    pub du_max: Vec2,
    pub z_min: f64,
    pub z_max: f64,
    /// Minimum stance duration for walking (swing-foot limit).
    pub t_min: f64,
    /// Longest stance the robot may hold; caps Γ when the height bound does not.
    pub t_s_max: f64,
    /// Longest admissible flight.
    pub t_f_max: f64,
    pub b_x_min: f64,
    pub b_x_max: f64,
    /// Largest DCM offset towards the inside (the previous stance foot).
    pub b_y_in_max: f64,
    /// Largest DCM offset towards the outside.
    pub b_y_out_max: f64,
    pub mu_s: f64,
    #[serde(default)]
    pub weights: Weights,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl GaitSpec {
    /// A running gait sized for a small biped with a ~0.32 m CoM height.
    pub fn running() -> Self {
        Self {
            omega: 8.0,
            g: DEFAULT_GRAVITY,
            t_s_nom: 0.15,
            dz0: 0.17,
            v_des: Vec3::zeros(),
            pelvis_width: 0.1,
            du_min: Vec2::new(-0.25, 0.03),
            du_max: Vec2::new(0.25, 0.25),
            z_min: 0.2,
            z_max: 0.37,
            t_min: 0.08,
            t_s_max: 0.6,
            t_f_max: 0.4,
            b_x_min: -0.12,
            b_x_max: 0.12,
            b_y_in_max: 0.1,
            b_y_out_max: 0.04,
            mu_s: 0.8,
            weights: Weights::default(),
        }
    }

    /// LIPM walking at the given CoM height above the ground.
    pub fn lipm_walking(com_height: f64) -> Self {
        Self {
            omega: (DEFAULT_GRAVITY / com_height).sqrt(),
            t_s_nom: 0.25,
            dz0: 0.0,
            ..Self::running()
        }
    }

    pub fn gamma_nom(&self) -> f64 {
        (self.omega * self.t_s_nom).exp()
    }

    /// `g / ω²`, the VRP height above the CoP.
    pub fn vrp_height(&self) -> f64 {
        self.g / (self.omega * self.omega)
    }

    /// Nominal CoM height above the ground at the start of a step.
    pub fn com_height(&self) -> f64 {
        self.vrp_height() + self.dz0
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    pub fn with_velocity(&self, v_des: Vec3) -> Self {
        Self { v_des, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.omega,
            self.g,
            self.t_s_nom,
            self.dz0,
            self.pelvis_width,
            self.z_min,
            self.z_max,
            self.t_min,
            self.t_s_max,
            self.t_f_max,
            self.b_x_min,
            self.b_x_max,
            self.b_y_in_max,
            self.b_y_out_max,
            self.mu_s,
        ];
        ensure_finite("gait spec", &scalars)?;
        ensure_finite("v_des", self.v_des.as_slice())?;
        ensure_finite("step bounds", &[self.du_min.x, self.du_min.y, self.du_max.x, self.du_max.y])?;
        let fail = |msg: &str| Err(GaitError::InvalidInput(msg.to_string()));
        if self.omega <= 0.0 {
            return fail("omega must be positive");
        }
        if self.g <= 0.0 {
            return fail("g must be positive");
        }
        if self.v_des.z != 0.0 {
            return fail("v_des.z must be zero");
        }
        if self.z_min >= self.z_max {
            return fail("z_min must be below z_max");
        }
        if self.du_min.x >= self.du_max.x || self.du_min.y >= self.du_max.y {
            return fail("du_min must be below du_max componentwise");
        }
        if self.t_s_nom <= self.t_min {
            return fail("t_s_nom must exceed t_min");
        }
        if self.t_s_max < self.t_s_nom || self.t_f_max < 0.0 {
            return fail("t_s_max must cover t_s_nom and t_f_max must be non-negative");
        }
        if self.b_x_min >= self.b_x_max || -self.b_y_out_max >= self.b_y_in_max {
            return fail("DCM offset bounds are empty");
        }
        if self.mu_s < 0.0 {
            return fail("mu_s must be non-negative");
        }
        let w = &self.weights;
        if [w.step, w.gamma, w.flight, w.offset].iter().any(|a| !a.is_finite() || *a < 0.0) {
            return fail("weights must be finite and non-negative");
        }
        if w.offset <= 0.0 {
            return fail("the DCM offset weight must be positive");
        }
        Ok(())
    }
}

/// DCM `ξ = x + ẋ/ω`.
pub fn dcm_from_state(com: &Vec3, com_vel: &Vec3, omega: f64) -> Result<Vec3> {
    ensure_finite("com", com.as_slice())?;
    ensure_finite("com velocity", com_vel.as_slice())?;
    check_omega(omega)?;
    Ok(com + com_vel / omega)
}

/// VRP `r_cop + (0, 0, g/ω²)`.
pub fn vrp_from_cop(cop: &Vec3, omega: f64, g: f64) -> Result<Vec3> {
    ensure_finite("cop", cop.as_slice())?;
    check_omega(omega)?;
    Ok(cop + Vec3::new(0.0, 0.0, g / (omega * omega)))
}

pub(crate) fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(GaitError::InvalidInput(format!("omega must be positive and finite, got {omega}")))
    }
}
