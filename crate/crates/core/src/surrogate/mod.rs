//! Surrogate backends: context in, discrete posteriors out.
//!
//! A backend holds no state beyond the most recent context. Inputs reach it
//! normalized to the unit cube by the design-space bounds; outputs stay in raw
//! units and every posterior leaves the backend in raw units.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::DiscretePosterior;
use crate::space::{DesignPoint, DesignSpace};

pub mod external;
pub mod gp;
pub mod khist;

pub use external::{ExternalBackend, ExternalClient};
pub use gp::{GpBackend, GpHyperparams, GpModel, KernelKind};
pub use khist::{BandwidthPolicy, KhistBackend};

/// Observations handed to a backend: unit-cube inputs and raw outputs.
#[derive(Clone, Debug)]
pub struct Context {
    space: DesignSpace,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl Context {
    pub fn new(space: &DesignSpace, points: &[DesignPoint], values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("context value {i} is not finite")));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != space.dim()) {
            return Err(Error::InvalidArgument(format!(
                "context point has dimension {}, space has {}",
                p.dim(),
                space.dim()
            )));
        }
        Ok(Self {
            space: space.clone(),
            inputs: points.iter().map(|p| space.normalize(p)).collect(),
            outputs: values.to_vec(),
        })
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn normalize_queries(&self, queries: &[DesignPoint]) -> Vec<Vec<f64>> {
        queries.iter().map(|q| self.space.normalize(q)).collect()
    }
}

/// Affine maps applied on the way into a backend and undone on the way out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub output_mean: f64,
    pub output_std: f64,
}

impl NormalizationState {
    pub fn from_context(ctx: &Context) -> Self {
        let n = ctx.len().max(1) as f64;
        let mean = ctx.outputs.iter().sum::<f64>() / n;
        let var = ctx.outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            lower: ctx.space.lower().to_vec(),
            upper: ctx.space.upper().to_vec(),
            output_mean: mean,
            output_std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.output_mean) / self.output_std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.output_std + self.output_mean
    }
}

pub trait SurrogateBackend: Send {
    fn name(&self) -> String;

    /// Replaces the context wholesale; nothing from earlier contexts survives.
    fn set_context(&mut self, context: &Context) -> Result<()>;

    /// One posterior per query, in query order.
    fn predict_batch(&self, queries: &[DesignPoint]) -> Result<Vec<DiscretePosterior>>;
}

/// Which surrogate family to instantiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    GpRbf,
    GpMatern,
    GpLinear,
    Khist,
    External,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::GpRbf => "gp_rbf",
            BackendKind::GpMatern => "gp_matern",
            BackendKind::GpLinear => "gp_linear",
            BackendKind::Khist => "khist",
            BackendKind::External => "external",
        }
    }

    pub fn kernel(&self) -> Option<KernelKind> {
        match self {
            BackendKind::GpRbf => Some(KernelKind::Rbf),
            BackendKind::GpMatern => Some(KernelKind::Matern52),
            BackendKind::GpLinear => Some(KernelKind::Linear),
            _ => None,
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gp_rbf" => BackendKind::GpRbf,
            "gp_matern" => BackendKind::GpMatern,
            "gp_linear" => BackendKind::GpLinear,
            "khist" => BackendKind::Khist,
            "external" => BackendKind::External,
            other => return Err(Error::Config(format!("unknown backend `{other}`"))),
        })
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Builds backend instances for one run. External instances share a single
/// connection.
pub struct BackendFactory {
    kind: BackendKind,
    bins: usize,
    seed: u64,
    external: Option<Arc<Mutex<ExternalClient>>>,
}

impl BackendFactory {
    pub fn new(kind: BackendKind, bins: usize, seed: u64, external_cmd: Option<&str>) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        let external = match kind {
            BackendKind::External => {
                let cmd =
                    external_cmd.ok_or_else(|| Error::Config("external backend selected without a command".into()))?;
                Some(Arc::new(Mutex::new(ExternalClient::spawn(cmd)?)))
            }
            _ => None,
        };
        Ok(Self {
            kind,
            bins,
            seed,
            external,
        })
    }

    /// `instance` distinguishes the surrogates of one strategy so their fits
    /// draw from separate random streams.
    pub fn build(&self, instance: u64) -> Box<dyn SurrogateBackend> {
        match self.kind {
            BackendKind::Khist => Box::new(KhistBackend::new(self.bins, BandwidthPolicy::Median)),
            BackendKind::External => Box::new(ExternalBackend::new(
                Arc::clone(self.external.as_ref().expect("external client")),
                self.bins,
            )),
            kind => Box::new(GpBackend::new(
                kind.kernel().expect("gp kernel"),
                self.bins,
                self.seed ^ instance.wrapping_mul(0xA076_1D64_78BD_642F),
            )),
        }
    }
}
