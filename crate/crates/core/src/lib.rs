//! Walking and running gait generation for bipeds on the linear 3D
//! centroidal model `ẍ = ω²(x - r_vrp)`, with a QP step controller that adapts
//! foothold, stance time and flight time, and a deterministic point-mass
//! simulator to exercise it.

pub mod centroidal;
pub mod closed_form;
pub mod controller;
pub mod error;
pub mod nominal;
pub mod oracle;
pub mod qp;
pub mod sim;

pub use centroidal::{dcm_from_state, vrp_from_cop, CentroidalState, GaitSpec, Phase, StanceSide, Vec2, Vec3, Weights};
pub use closed_form::StepContext;
pub use controller::{controller_tick, ControllerInputs, Landing, StepCommand, StepController, TickOutcome};
pub use error::{GaitError, Result};
pub use nominal::{classify_mode, froude_number, Mode, NominalGait};
pub use qp::{kkt_residuals, solve_qp, QpProblem, QpSolution, QpSolver, QpStatus};
