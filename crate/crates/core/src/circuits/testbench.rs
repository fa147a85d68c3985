//! The testbench type: a design space, a specification set and a pure
//! function from design points to metric values.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{MetricVector, SpecSet};
use crate::space::{DesignPoint, DesignSpace};

/// One design variable: its name, bounds and unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

impl Variable {
    pub fn new(name: &str, lower: f64, upper: f64, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            unit: unit.to_string(),
        }
    }
}

/// Where a testbench's constants come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Every constant is written out in the source.
    Analytic,
    /// Some constants are drawn from this fixed seed at construction.
    Generated { seed: u64 },
}

/// Computes every metric at once, in spec order.
pub type MetricModel = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub struct Testbench {
    name: String,
    description: String,
    variables: Vec<Variable>,
    space: DesignSpace,
    specs: SpecSet,
    provenance: Provenance,
    constants: serde_json::Value,
    model: Arc<MetricModel>,
}

impl fmt::Debug for Testbench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Testbench")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("specs", &self.specs)
            .finish_non_exhaustive()
    }
}

impl Testbench {
    pub fn new(
        name: &str,
        description: &str,
        variables: Vec<Variable>,
        specs: SpecSet,
        provenance: Provenance,
        constants: serde_json::Value,
        model: Arc<MetricModel>,
    ) -> Result<Self> {
        let space = DesignSpace::new(
            variables.iter().map(|v| v.lower).collect(),
            variables.iter().map(|v| v.upper).collect(),
        )?;
        Ok(Self {
            name: name.to_string(),
            description: description.to_string(),
            variables,
            space,
            specs,
            provenance,
            constants,
            model,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn specs(&self) -> &SpecSet {
        &self.specs
    }

    /// Replaces the specification set; metric names must stay the same.
    pub fn with_specs(mut self, specs: SpecSet) -> Result<Self> {
        if !specs.names().eq(self.specs.names()) {
            return Err(Error::Config(format!(
                "spec override for `{}` must keep the metric names and order",
                self.name
            )));
        }
        self.specs = specs;
        Ok(self)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn constants(&self) -> &serde_json::Value {
        &self.constants
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.specs.names().map(str::to_string).collect()
    }

    /// All metrics at `x`.
    pub fn evaluate(&self, x: &DesignPoint) -> Result<MetricVector> {
        if x.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} variables, got {}",
                self.name,
                self.dim(),
                x.dim()
            )));
        }
        let values = (self.model)(x.coords());
        debug_assert_eq!(values.len(), self.specs.len());
        let mut out = MetricVector::new();
        for (name, v) in self.specs.names().zip(values) {
            if !v.is_finite() {
                return Err(Error::DegenerateMetric {
                    name: name.to_string(),
                    reason: format!("{} produced {v}", self.name),
                });
            }
            out.insert(name, v);
        }
        Ok(out)
    }

    /// One metric at `x`.
    pub fn metric(&self, name: &str, x: &DesignPoint) -> Result<f64> {
        self.evaluate(x)?.require(name)
    }
}

/// Free-function form of [`Testbench::evaluate`].
pub fn evaluate(tb: &Testbench, x: &DesignPoint) -> Result<MetricVector> {
    tb.evaluate(x)
}
