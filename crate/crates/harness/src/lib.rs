//! Experiment protocols on top of `famopt-core`: small-sample regression,
//! optimization campaigns with convergence and acquisition-ablation tables,
//! a trace auditor, and the helpers behind the `famopt` command line.

pub mod audit;
pub mod bench;
pub mod campaign;
pub mod error;
pub mod metrics;
pub mod regression;
pub mod report;

pub use error::{HarnessError, Result};

use std::path::Path;

/// Parses a TOML file into `T`.
pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(toml::from_str(&text)?)
}
