//! Small-sample regression protocol: fit each backend on a fixed LHS dataset
//! and score held-out predictions by R².
//!
//! For every `(testbench, size, seed)` one dataset and one train/test split
//! are drawn and shared by every backend and metric, so backends are compared
//! on identical data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use famopt_core::circuits;
use famopt_core::posterior::{moments, DEFAULT_BINS};
use famopt_core::space::{latin_hypercube, train_test_split, Split};
use famopt_core::surrogate::{BackendFactory, BackendKind, Context};
use famopt_core::{DesignPoint, Rng};

use crate::error::{HarnessError, Result};
use crate::metrics::r_squared;

/// Column order of the regression CSV.
pub const CSV_HEADER: [&str; 6] = ["testbench", "metric", "backend", "samples", "seed", "r_squared"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionTask {
    pub testbench: String,
    /// Metrics to fit; empty means every metric of the testbench.
    #[serde(default)]
    pub metrics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub tasks: Vec<RegressionTask>,
    pub backends: Vec<BackendKind>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_backend_cmd: Option<String>,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            backends: vec![BackendKind::GpMatern, BackendKind::Khist],
            sizes: vec![50, 100, 500],
            seeds: (0..10).collect(),
            train_fraction: 0.8,
            bins: DEFAULT_BINS,
            external_backend_cmd: None,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.backends.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(HarnessError::Config(
                "regression needs at least one task, backend, size and seed".into(),
            ));
        }
        for task in &self.tasks {
            let bench = circuits::build(&task.testbench)?;
            for m in &task.metrics {
                if bench.specs().get(m).is_none() {
                    return Err(HarnessError::Config(format!("{} has no metric `{m}`", task.testbench)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub testbench: String,
    pub metric: String,
    pub backend: String,
    pub samples: usize,
    pub seed: u64,
    /// `None` when the backend failed to fit or predict.
    pub r_squared: Option<f64>,
}

/// A labelled dataset and the split every backend uses.
pub struct Dataset {
    pub points: Vec<DesignPoint>,
    pub split: Split,
}

/// The dataset for `(testbench, size, seed)`: LHS design then an 80:20 (or
/// configured) split, both drawn from the seed's base stream.
pub fn dataset(space: &famopt_core::DesignSpace, size: usize, seed: u64, train_fraction: f64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    let points = latin_hypercube(space, size, &mut rng);
    let split = train_test_split(size, train_fraction, &mut rng)?;
    Ok(Dataset { points, split })
}

fn fit_and_score(
    factory: &BackendFactory,
    space: &famopt_core::DesignSpace,
    data: &Dataset,
    ys: &[f64],
) -> Result<f64> {
    let pick = |idx: &[usize]| -> (Vec<DesignPoint>, Vec<f64>) {
        idx.iter().map(|&i| (data.points[i].clone(), ys[i])).unzip()
    };
    let (train_x, train_y) = pick(&data.split.train);
    let (test_x, test_y) = pick(&data.split.test);
    let mut backend = factory.build(0);
    backend.set_context(&Context::new(space, &train_x, &train_y)?)?;
    let preds: Vec<f64> = backend.predict_batch(&test_x)?.iter().map(|p| moments(p).0).collect();
    r_squared(&preds, &test_y)
}

pub fn run_regression_protocol(config: &RegressionConfig) -> Result<Vec<RegressionReport>> {
    config.validate()?;
    let mut rows = Vec::new();
    for task in &config.tasks {
        let bench = circuits::build(&task.testbench)?;
        let metrics: Vec<String> = if task.metrics.is_empty() {
            bench.metric_names()
        } else {
            task.metrics.clone()
        };
        for &size in &config.sizes {
            for &seed in &config.seeds {
                let data = dataset(bench.space(), size, seed, config.train_fraction)?;
                let evaluated = data
                    .points
                    .iter()
                    .map(|p| bench.evaluate(p))
                    .collect::<famopt_core::Result<Vec<_>>>()?;
                for metric in &metrics {
                    let ys: Vec<f64> = evaluated
                        .iter()
                        .map(|m| m.require(metric))
                        .collect::<famopt_core::Result<_>>()?;
                    for &kind in &config.backends {
                        let r2 = BackendFactory::new(kind, config.bins, seed, config.external_backend_cmd.as_deref())
                            .map_err(HarnessError::from)
                            .and_then(|factory| fit_and_score(&factory, bench.space(), &data, &ys));
                        let r2 = match r2 {
                            Ok(v) => Some(v),
                            Err(e) => {
                                log::warn!("{} {metric} {kind} n={size} seed={seed}: {e}", task.testbench);
                                None
                            }
                        };
                        rows.push(RegressionReport {
                            testbench: task.testbench.clone(),
                            metric: metric.clone(),
                            backend: kind.to_string(),
                            samples: size,
                            seed,
                            r_squared: r2,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Writes rows with [`CSV_HEADER`]; failed fits appear as `failed`.
pub fn write_csv_to<W: std::io::Write>(rows: &[RegressionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.testbench.clone(),
            r.metric.clone(),
            r.backend.clone(),
            r.samples.to_string(),
            r.seed.to_string(),
            r.r_squared.map_or_else(|| "failed".to_string(), |v| format!("{v:.6}")),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn write_csv(rows: &[RegressionReport], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(rows, &mut buf)?;
    crate::campaign::write_atomic(path, &buf)
}
