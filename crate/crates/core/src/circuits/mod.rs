//! Synthetic analog-circuit testbenches.
//!
//! Every metric is an explicit composition of the primitives in
//! [`primitives`]: exponential and power-law device laws, real-pole transfer
//! functions, and logistic regime indicators. No simulator is involved; the
//! formulas and constants are listed in `docs/testbenches.md` and pinned by
//! `docs/testbench_manifest.json`.

pub mod bandgap;
pub mod chargepump;
pub mod gm;
pub mod ldo;
pub mod ota;
pub mod primitives;
pub mod registry;
pub mod testbench;

pub use registry::{build, build_registry, manifest_json, NAMES, REGIME_SWITCHING};
pub use testbench::{evaluate, Provenance, Testbench, Variable};
