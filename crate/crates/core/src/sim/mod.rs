//! Deterministic point-mass simulation of the controlled gait: closed-form
//! stance and flight segments, take-off and touchdown events, velocity pushes
//! and random terrain.

pub mod harness;
pub mod log;
pub mod scenario;
pub mod terrain;

pub use harness::{apply_disturbance, friction_margin, run_scenario, walking_omega, SimOutput};
pub use log::{Failure, StepRecord, TickRecord, TrajectoryLog};
pub use scenario::{ball_impulse, Disturbance, GaitKind, GaitSet, Scenario, ScheduleEntry};
pub use terrain::Terrain;
