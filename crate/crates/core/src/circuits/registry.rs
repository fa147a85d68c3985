//! The fixed set of named testbenches.

use std::collections::BTreeMap;

use serde::Serialize;

use super::testbench::{Provenance, Testbench, Variable};
use super::{bandgap, chargepump, gm, ldo, ota};
use crate::error::{Error, Result};
use crate::fom::SpecItem;

/// Registry names in presentation order.
pub const NAMES: [&str; 6] = [
    "ota2-analytic",
    "ota3-analytic",
    "bandgap-analytic",
    "gm-highdim",
    "ldo-regime",
    "chargepump-regime",
];

/// Benches whose metrics are gated by regime indicators.
pub const REGIME_SWITCHING: [&str; 2] = ["ldo-regime", "chargepump-regime"];

pub fn build_registry() -> BTreeMap<String, Testbench> {
    NAMES
        .iter()
        .map(|n| (n.to_string(), build(n).expect("built-in testbench is valid")))
        .collect()
}

/// Builds one testbench by name.
pub fn build(name: &str) -> Result<Testbench> {
    match name {
        "ota2-analytic" => ota::ota2(),
        "ota3-analytic" => ota::ota3(),
        "bandgap-analytic" => bandgap::bandgap(),
        "gm-highdim" => gm::gm_highdim(),
        "ldo-regime" => ldo::ldo(),
        "chargepump-regime" => chargepump::chargepump(),
        other => Err(Error::UnknownTestbench(other.to_string())),
    }
}

/// Everything that pins a testbench's behaviour, for the committed manifest.
#[derive(Serialize)]
struct ManifestEntry<'a> {
    name: &'a str,
    dim: usize,
    description: &'a str,
    provenance: Provenance,
    variables: &'a [Variable],
    specs: &'a [SpecItem],
    constants: &'a serde_json::Value,
}

/// Pretty JSON describing every testbench: bounds, specs and constants.
pub fn manifest_json() -> String {
    let benches: Vec<Testbench> = NAMES.iter().map(|n| build(n).expect("valid")).collect();
    let entries: Vec<ManifestEntry> = benches
        .iter()
        .map(|tb| ManifestEntry {
            name: tb.name(),
            dim: tb.dim(),
            description: tb.description(),
            provenance: tb.provenance(),
            variables: tb.variables(),
            specs: tb.specs().items(),
            constants: tb.constants(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("manifest serializes") + "\n"
}
