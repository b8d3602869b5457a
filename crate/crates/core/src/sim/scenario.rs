use serde::{Deserialize, Serialize};

use crate::centroidal::{GaitSpec, StanceSide, Vec3};
use crate::error::{ensure_finite, GaitError, Result};
use crate::nominal::{classify_mode, Mode};
use crate::sim::terrain::Terrain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitKind {
    Running,
    Walking,
}

impl GaitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GaitKind::Running => "running",
            GaitKind::Walking => "walking",
        }
    }
}

/// The two gaits a scenario may switch between. The walking gait must be
/// LIPM walking and the running gait must have flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSet {
    pub running: GaitSpec,
    pub walking: GaitSpec,
}

impl Default for GaitSet {
    fn default() -> Self {
        Self {
            running: GaitSpec::running(),
            walking: GaitSpec::lipm_walking(0.32),
        }
    }
}

impl GaitSet {
    pub fn get(&self, kind: GaitKind) -> &GaitSpec {
        match kind {
            GaitKind::Running => &self.running,
            GaitKind::Walking => &self.walking,
        }
    }
}

/// From `t` on, the next touchdown switches to `gait` at velocity `v_des`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub t: f64,
    pub gait: GaitKind,
    pub v_des: Vec3,
}

/// Instantaneous CoM velocity change at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub t: f64,
    pub dv: Vec3,
}

/// CoM velocity change from a ball of mass `ball_mass` hitting at
/// `ball_velocity` and stopping against a robot of mass `robot_mass`.
pub fn ball_impulse(ball_mass: f64, ball_velocity: &Vec3, robot_mass: f64) -> Result<Vec3> {
    ensure_finite("ball impulse", &[ball_mass, robot_mass])?;
    if robot_mass <= 0.0 || ball_mass < 0.0 {
        return Err(GaitError::InvalidInput("masses must be positive".into()));
    }
    Ok(ball_velocity * (ball_mass / robot_mass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub gaits: GaitSet,
    pub duration: f64,
    pub control_rate: f64,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub terrain: Terrain,
    #[serde(default = "default_side")]
    pub initial_side: StanceSide,
}

fn default_side() -> StanceSide {
    StanceSide::Right
}

impl Scenario {
    /// Undisturbed running on flat ground at a constant command.
    pub fn steady(kind: GaitKind, v_des: Vec3, duration: f64) -> Self {
        Self {
            gaits: GaitSet::default(),
            duration,
            control_rate: 1000.0,
            schedule: vec![ScheduleEntry { t: 0.0, gait: kind, v_des }],
            disturbances: Vec::new(),
            terrain: Terrain::flat(),
            initial_side: StanceSide::Right,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(GaitError::InvalidInput(msg));
        ensure_finite("scenario timing", &[self.duration, self.control_rate])?;
        if self.duration <= 0.0 || self.control_rate <= 0.0 {
            return fail("duration and control_rate must be positive".into());
        }
        self.terrain.validate()?;
        for kind in [GaitKind::Running, GaitKind::Walking] {
            let spec = self.gaits.get(kind);
            spec.validate()?;
            let mode = classify_mode(spec).mode;
            let expected = match kind {
                GaitKind::Running => Mode::Running,
                GaitKind::Walking => Mode::LipmWalking,
            };
            if mode != expected {
                return fail(format!(
                    "{} gait classifies as {}; only LIPM walking and running can be simulated",
                    kind.as_str(),
                    mode.as_str()
                ));
            }
        }
        match self.schedule.first() {
            Some(e) if e.t <= 0.0 => {}
            _ => return fail("schedule must start at t = 0".into()),
        }
        for e in &self.schedule {
            ensure_finite("schedule entry", &[e.t, e.v_des.x, e.v_des.y, e.v_des.z])?;
            if e.v_des.z != 0.0 {
                return fail("commanded vertical velocity must be zero".into());
            }
        }
        if self.schedule.windows(2).any(|w| w[1].t < w[0].t) {
            return fail("schedule times must be sorted".into());
        }
        for d in &self.disturbances {
            ensure_finite("disturbance", &[d.t, d.dv.x, d.dv.y, d.dv.z])?;
        }
        if self.disturbances.windows(2).any(|w| w[1].t < w[0].t) {
            return fail("disturbance times must be sorted".into());
        }
        Ok(())
    }

    /// Schedule entry in force at time `t`.
    pub fn command_at(&self, t: f64) -> &ScheduleEntry {
        self.schedule
            .iter()
            .rev()
            .find(|e| e.t <= t)
            .unwrap_or(&self.schedule[0])
    }
}
