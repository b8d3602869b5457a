//! Configuration, artifact writing and the `nominal`, `simulate` and
//! `verify` commands of the `gait` binary.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod nominal;
pub mod simulate;
pub mod verify;

pub use config::ConfigDocument;
pub use error::{CliError, Result};
