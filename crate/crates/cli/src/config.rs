//! TOML configuration documents.
//!
//! A document names its schema, the robot mass used to turn ball hits into
//! velocity changes, the scenario, the pushes and optional sweep and verify
//! sections. Unknown keys are rejected everywhere.

use std::path::Path;

use gait_core::sim::{ball_impulse, Disturbance, GaitKind, GaitSet, Scenario, ScheduleEntry, Terrain};
use gait_core::{StanceSide, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA: &str = "gait-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Robot {
    /// Total mass in kg.
    pub mass: f64,
}

impl Default for Robot {
    fn default() -> Self {
        Self { mass: 1.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub control_rate: f64,
    #[serde(default = "default_side")]
    pub initial_side: StanceSide,
    #[serde(default)]
    pub gaits: GaitSet,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub terrain: Terrain,
}

fn default_side() -> StanceSide {
    StanceSide::Right
}

/// A push at time `t`, given either as a velocity change `dv` or as a
/// ball of `ball_mass` arriving at `ball_velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Push {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dv: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_velocity: Option<Vec3>,
}

impl Push {
    pub fn velocity(t: f64, dv: Vec3) -> Self {
        Self {
            t,
            dv: Some(dv),
            ball_mass: None,
            ball_velocity: None,
        }
    }

    pub fn ball(t: f64, ball_mass: f64, ball_velocity: Vec3) -> Self {
        Self {
            t,
            dv: None,
            ball_mass: Some(ball_mass),
            ball_velocity: Some(ball_velocity),
        }
    }

    pub fn to_disturbance(&self, robot: &Robot) -> Result<Disturbance> {
        let dv = match (self.dv, self.ball_mass, self.ball_velocity) {
            (Some(dv), None, None) => dv,
            (None, Some(m), Some(v)) => {
                ball_impulse(m, &v, robot.mass).map_err(|e| CliError::Config(format!("pushes: {e}")))?
            }
            _ => {
                return Err(CliError::Config(format!(
                    "pushes: the push at t = {} needs either dv or both ball_mass and ball_velocity",
                    self.t
                )))
            }
        };
        Ok(Disturbance { t: self.t, dv })
    }
}

/// Repeat the scenario once per magnitude with one extra push of
/// `magnitude * direction` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub t: f64,
    pub direction: Vec3,
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random draws per sampled suite.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Multiplies every suite tolerance.
    #[serde(default = "default_scale")]
    pub tolerance_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            draws: default_draws(),
            tolerance_scale: default_scale(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub schema: String,
    #[serde(default)]
    pub robot: Robot,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub pushes: Vec<Push>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl Default for ConfigDocument {
    /// Running at 0.3 m/s, switching to walking in place at 1.8 s, with ball
    /// hits at 0.95 s and 2.5 s.
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            robot: Robot::default(),
            scenario: ScenarioConfig {
                duration: 4.0,
                control_rate: 1000.0,
                initial_side: StanceSide::Right,
                gaits: GaitSet::default(),
                schedule: vec![
                    ScheduleEntry {
                        t: 0.0,
                        gait: GaitKind::Running,
                        v_des: Vec3::new(0.3, 0.0, 0.0),
                    },
                    ScheduleEntry {
                        t: 1.8,
                        gait: GaitKind::Walking,
                        v_des: Vec3::zeros(),
                    },
                ],
                terrain: Terrain::flat(),
            },
            pushes: vec![
                Push::ball(0.95, 0.1, Vec3::new(11.7, 0.0, 0.0)),
                Push::ball(2.5, 0.1, Vec3::new(10.4, 0.0, 0.0)),
            ],
            sweep: None,
            verify: VerifyConfig::default(),
        }
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ConfigDocument = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        doc.check()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config documents always serialize")
    }

    fn check(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(CliError::Config(format!(
                "schema: expected \"{SCHEMA}\", found \"{}\"",
                self.schema
            )));
        }
        if !(self.robot.mass > 0.0 && self.robot.mass.is_finite()) {
            return Err(CliError::Config(format!("robot.mass: must be positive, found {}", self.robot.mass)));
        }
        if self.verify.draws == 0 || !(self.verify.tolerance_scale > 0.0) {
            return Err(CliError::Config("verify: draws and tolerance_scale must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.magnitudes.iter().any(|m| !m.is_finite()) || !sweep.t.is_finite() {
                return Err(CliError::Config("sweep: values must be finite".into()));
            }
        }
        Ok(())
    }

    /// Override the terrain seed, as the `--seed` flag does.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.scenario.terrain.seed = seed;
            self.verify.seed = seed;
        }
        self
    }

    /// The simulator scenario with pushes converted to velocity changes and
    /// sorted by time.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut disturbances = self
            .pushes
            .iter()
            .map(|p| p.to_disturbance(&self.robot))
            .collect::<Result<Vec<_>>>()?;
        disturbances.sort_by(|a, b| a.t.total_cmp(&b.t));
        let s = &self.scenario;
        let sc = Scenario {
            gaits: s.gaits,
            duration: s.duration,
            control_rate: s.control_rate,
            schedule: s.schedule.clone(),
            disturbances,
            terrain: s.terrain,
            initial_side: s.initial_side,
        };
        sc.validate().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let doc = ConfigDocument::default();
        let text = doc.to_toml();
        assert_eq!(ConfigDocument::parse(&text).unwrap(), doc);
    }

    #[test]
    fn ball_pushes_become_velocity_changes() {
        let sc = ConfigDocument::default().scenario().unwrap();
        assert_eq!(sc.disturbances.len(), 2);
        assert!((sc.disturbances[0].dv.x - 0.9).abs() < 1e-12);
        assert!((sc.disturbances[1].dv.x - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_keys_and_schema() {
        let text = ConfigDocument::default().to_toml();
        let err = ConfigDocument::parse(&text.replace("[robot]\nmass = ", "[robot]\nweight = ")).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
        let err = ConfigDocument::parse(&text.replace("ball_mass = ", "ball_weight = ")).unwrap_err();
        assert!(err.to_string().contains("ball_weight"), "{err}");
        let err = ConfigDocument::parse(&text.replace(SCHEMA, "gait-config/0")).unwrap_err();
        assert!(err.to_string().contains("schema"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn push_needs_exactly_one_form() {
        let robot = Robot::default();
        let both = Push {
            dv: Some(Vec3::zeros()),
            ..Push::ball(1.0, 0.1, Vec3::zeros())
        };
        assert!(both.to_disturbance(&robot).is_err());
        let dv = Push::velocity(1.0, Vec3::new(0.2, 0.0, 0.0)).to_disturbance(&robot).unwrap();
        assert_eq!(dv.dv.x, 0.2);
    }

    #[test]
    fn seed_override() {
        let doc = ConfigDocument::default().with_seed(Some(17));
        assert_eq!(doc.scenario.terrain.seed, 17);
        assert_eq!(ConfigDocument::default().with_seed(None), ConfigDocument::default());
    }
}
