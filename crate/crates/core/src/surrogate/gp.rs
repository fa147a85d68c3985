//! Gaussian-process regression with a single isotropic lengthscale.
//!
//! Inputs live in the unit cube, shifted to the context's input mean (which
//! lets the linear kernel fit an offset); outputs are standardized per
//! context. The hyperparameters are chosen by maximizing the log marginal
//! likelihood with a derivative-free coordinate search in log space,
//! restarted from a Latin hypercube of starting points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Context, NormalizationState, SurrogateBackend};
use crate::error::{Error, Result};
use crate::posterior::{gaussian_to_discrete, DiscretePosterior, GaussianPosterior};
use crate::rng::Rng;
use crate::space::{latin_hypercube, DesignPoint, DesignSpace};

const LN10: f64 = std::f64::consts::LN_10;

/// Bias added to the linear kernel.
pub const LINEAR_BIAS: f64 = 1e-6;

pub const LOG_LENGTHSCALE_RANGE: (f64, f64) = (-3.0 * LN10, 3.0 * LN10);
pub const LOG_SIGNAL_VARIANCE_RANGE: (f64, f64) = (-2.0 * LN10, 2.0 * LN10);
pub const LOG_NOISE_VARIANCE_RANGE: (f64, f64) = (-8.0 * LN10, 0.0);

pub const FIT_RESTARTS: usize = 5;
pub const FIT_EVALS_PER_RESTART: usize = 60;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Matern52,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub log_lengthscale: f64,
    pub log_signal_variance: f64,
    pub log_noise_variance: f64,
    pub kernel: KernelKind,
}

impl GpHyperparams {
    pub fn new(kernel: KernelKind, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            log_lengthscale: lengthscale.ln(),
            log_signal_variance: signal_variance.ln(),
            log_noise_variance: noise_variance.ln(),
            kernel,
        }
        .clamped()
    }

    /// Projects onto the valid region: lengthscale in `[1e-3, 1e3]`, noise
    /// variance at least `1e-8`.
    pub fn clamped(mut self) -> Self {
        self.log_lengthscale = self
            .log_lengthscale
            .clamp(LOG_LENGTHSCALE_RANGE.0, LOG_LENGTHSCALE_RANGE.1);
        self.log_noise_variance = self.log_noise_variance.max(LOG_NOISE_VARIANCE_RANGE.0);
        self
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }

    /// Kernel value as a function of squared distance and dot product.
    fn eval_parts(&self, sq_dist: f64, dot: f64) -> f64 {
        let sf2 = self.signal_variance();
        match self.kernel {
            KernelKind::Rbf => sf2 * (-0.5 * sq_dist / self.lengthscale().powi(2)).exp(),
            KernelKind::Matern52 => {
                let s = 5f64.sqrt() * sq_dist.sqrt() / self.lengthscale();
                sf2 * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelKind::Linear => sf2 * dot + LINEAR_BIAS,
        }
    }
}

pub fn kernel_eval(hp: &GpHyperparams, a: &[f64], b: &[f64]) -> f64 {
    let (mut sq, mut dot) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sq += (x - y) * (x - y);
        dot += x * y;
    }
    hp.eval_parts(sq, dot)
}

/// Pairwise geometry of a context, reused across likelihood evaluations.
struct Geometry {
    sq_dist: DMatrix<f64>,
    dot: DMatrix<f64>,
}

impl Geometry {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let mut sq_dist = DMatrix::zeros(n, n);
        let mut dot = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let (mut s, mut d) = (0.0, 0.0);
                for (a, b) in x[i].iter().zip(&x[j]) {
                    s += (a - b) * (a - b);
                    d += a * b;
                }
                sq_dist[(i, j)] = s;
                sq_dist[(j, i)] = s;
                dot[(i, j)] = d;
                dot[(j, i)] = d;
            }
        }
        Self { sq_dist, dot }
    }

    fn gram(&self, hp: &GpHyperparams) -> DMatrix<f64> {
        let n = self.sq_dist.nrows();
        let mut k = DMatrix::from_fn(n, n, |i, j| hp.eval_parts(self.sq_dist[(i, j)], self.dot[(i, j)]));
        let noise = hp.noise_variance();
        for i in 0..n {
            k[(i, i)] += noise;
        }
        k
    }
}

/// Lower Cholesky factor, escalating diagonal jitter by ×10 from 1e-8 to 1e-2.
fn cholesky_with_jitter(k: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if let Some(c) = k.clone().cholesky() {
        return Some((c.unpack(), 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Some((c.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// A GP conditioned on a context under fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct GpModel {
    hp: GpHyperparams,
    inputs: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    norm: NormalizationState,
    center: Vec<f64>,
    jitter: f64,
}

/// Context inputs shifted to zero mean. Stationary kernels are unaffected;
/// the linear kernel, whose bias is tiny, needs it to represent an offset.
fn centered_inputs(ctx: &Context) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = ctx.len().max(1) as f64;
    let dim = ctx.inputs().first().map_or(0, Vec::len);
    let mut center = vec![0.0; dim];
    for x in ctx.inputs() {
        for (c, v) in center.iter_mut().zip(x) {
            *c += v / n;
        }
    }
    let shifted = ctx
        .inputs()
        .iter()
        .map(|x| x.iter().zip(&center).map(|(v, c)| v - c).collect())
        .collect();
    (shifted, center)
}

impl GpModel {
    pub fn condition(ctx: &Context, hp: GpHyperparams) -> Result<Self> {
        if ctx.is_empty() {
            return Err(Error::Fit("empty context".into()));
        }
        let norm = NormalizationState::from_context(ctx);
        let y = DVector::from_iterator(ctx.len(), ctx.outputs().iter().map(|&v| norm.standardize(v)));
        let (inputs, center) = centered_inputs(ctx);
        let geom = Geometry::new(&inputs);
        let (chol, jitter) = cholesky_with_jitter(&geom.gram(&hp))
            .ok_or_else(|| Error::Fit("covariance is not positive definite even with 1e-2 jitter".into()))?;
        let alpha = solve_cholesky(&chol, &y);
        Ok(Self {
            hp,
            inputs,
            chol,
            alpha,
            norm,
            center,
            jitter,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hp
    }

    pub fn normalization(&self) -> &NormalizationState {
        &self.norm
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Mean of the context inputs (unit-cube coordinates); kernels see inputs
    /// relative to it.
    pub fn input_center(&self) -> &[f64] {
        &self.center
    }

    /// Posterior of the latent function at a unit-cube query, in standardized
    /// output units.
    pub fn predict_standardized(&self, q: &[f64]) -> (f64, f64) {
        let q: Vec<f64> = q.iter().zip(&self.center).map(|(v, c)| v - c).collect();
        let q = q.as_slice();
        let kq = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|x| kernel_eval(&self.hp, x, q)),
        );
        let mean = kq.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&kq)
            .expect("cholesky factor has a nonzero diagonal");
        let var = kernel_eval(&self.hp, q, q) - v.dot(&v);
        (mean, var.max(0.0))
    }

    pub fn predict_unit(&self, q: &[f64]) -> GaussianPosterior {
        let (m, v) = self.predict_standardized(q);
        GaussianPosterior {
            mean: self.norm.destandardize(m),
            std: v.sqrt() * self.norm.output_std,
        }
    }
}

fn solve_cholesky(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("nonzero diagonal");
    l.tr_solve_lower_triangular(&z).expect("nonzero diagonal")
}

/// Log marginal likelihood of standardized outputs; `None` when the
/// covariance cannot be factorized.
fn log_marginal_likelihood(geom: &Geometry, y: &DVector<f64>, hp: &GpHyperparams) -> Option<f64> {
    let (l, _) = cholesky_with_jitter(&geom.gram(hp))?;
    let alpha = solve_cholesky(&l, y);
    let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    let n = y.len() as f64;
    let v = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    v.is_finite().then_some(v)
}

/// Chooses hyperparameters for `kernel` by maximizing the log marginal
/// likelihood. Deterministic for a given `rng` state.
pub fn gp_fit(ctx: &Context, kernel: KernelKind, rng: &mut Rng) -> Result<GpHyperparams> {
    if ctx.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 observations, got {}", ctx.len())));
    }
    let norm = NormalizationState::from_context(ctx);
    let y = DVector::from_iterator(ctx.len(), ctx.outputs().iter().map(|&v| norm.standardize(v)));
    let geom = Geometry::new(&centered_inputs(ctx).0);

    let ranges = [
        LOG_LENGTHSCALE_RANGE,
        LOG_SIGNAL_VARIANCE_RANGE,
        LOG_NOISE_VARIANCE_RANGE,
    ];
    // The linear kernel ignores the lengthscale.
    let active: &[usize] = if kernel == KernelKind::Linear {
        &[1, 2]
    } else {
        &[0, 1, 2]
    };
    let box_space = DesignSpace::new(
        ranges.iter().map(|r| r.0).collect(),
        ranges.iter().map(|r| r.1).collect(),
    )?;
    let starts = latin_hypercube(&box_space, FIT_RESTARTS, rng);

    let to_hp = |t: &[f64; 3]| GpHyperparams {
        log_lengthscale: t[0],
        log_signal_variance: t[1],
        log_noise_variance: t[2],
        kernel,
    };
    let mut best: Option<([f64; 3], f64)> = None;
    for start in starts {
        let mut theta = [start[0], start[1], start[2]];
        if kernel == KernelKind::Linear {
            theta[0] = 0.0;
        }
        let mut value = log_marginal_likelihood(&geom, &y, &to_hp(&theta)).unwrap_or(f64::NEG_INFINITY);
        let mut evals = 1;
        let mut step: Vec<f64> = ranges.iter().map(|r| 0.25 * (r.1 - r.0)).collect();
        'search: while evals < FIT_EVALS_PER_RESTART {
            let mut moved = false;
            for &d in active {
                let mut improved = false;
                for sign in [1.0, -1.0] {
                    if evals >= FIT_EVALS_PER_RESTART {
                        break 'search;
                    }
                    let mut cand = theta;
                    cand[d] = (theta[d] + sign * step[d]).clamp(ranges[d].0, ranges[d].1);
                    if cand[d] == theta[d] {
                        continue;
                    }
                    evals += 1;
                    let v = log_marginal_likelihood(&geom, &y, &to_hp(&cand)).unwrap_or(f64::NEG_INFINITY);
                    if v > value {
                        theta = cand;
                        value = v;
                        improved = true;
                        break;
                    }
                }
                if improved {
                    step[d] = (step[d] * 2.0).min(0.5 * (ranges[d].1 - ranges[d].0));
                    moved = true;
                } else {
                    step[d] *= 0.5;
                }
            }
            if !moved && active.iter().all(|&d| step[d] < 1e-4) {
                break;
            }
        }
        if value.is_finite() && best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((theta, value));
        }
    }
    best.map(|(t, _)| to_hp(&t).clamped())
        .ok_or_else(|| Error::Fit("no hyperparameter setting admitted a Cholesky factorization".into()))
}

pub fn gp_predict(model: &GpModel, ctx: &Context, queries: &[DesignPoint]) -> Vec<GaussianPosterior> {
    ctx.normalize_queries(queries)
        .iter()
        .map(|q| model.predict_unit(q))
        .collect()
}

/// State behind a [`GpBackend`] after `set_context`.
#[derive(Clone, Debug)]
enum GpState {
    Fitted {
        model: Box<GpModel>,
        space: DesignSpace,
    },
    /// Fit failed: every query gets the context's marginal mean and spread.
    PriorMean(GaussianPosterior),
}

/// GP surrogate whose Gaussian posteriors are discretized for DEI.
#[derive(Clone, Debug)]
pub struct GpBackend {
    kernel: KernelKind,
    bins: usize,
    seed: u64,
    state: Option<GpState>,
}

impl GpBackend {
    pub fn new(kernel: KernelKind, bins: usize, seed: u64) -> Self {
        Self {
            kernel,
            bins,
            seed,
            state: None,
        }
    }

    pub fn model(&self) -> Option<&GpModel> {
        match &self.state {
            Some(GpState::Fitted { model, .. }) => Some(model.as_ref()),
            _ => None,
        }
    }

    pub fn predict_gaussian(&self, queries: &[DesignPoint]) -> Result<Vec<GaussianPosterior>> {
        match self.state.as_ref() {
            None => Err(Error::Contract("predict before set_context".into())),
            Some(GpState::PriorMean(g)) => Ok(vec![*g; queries.len()]),
            Some(GpState::Fitted { model, space }) => Ok(queries
                .iter()
                .map(|q| model.predict_unit(&space.normalize(q)))
                .collect()),
        }
    }
}

impl SurrogateBackend for GpBackend {
    fn name(&self) -> String {
        match self.kernel {
            KernelKind::Rbf => "gp_rbf",
            KernelKind::Matern52 => "gp_matern",
            KernelKind::Linear => "gp_linear",
        }
        .to_string()
    }

    fn set_context(&mut self, ctx: &Context) -> Result<()> {
        // The fit stream depends only on the seed and the context size.
        let mut rng = Rng::new(self.seed).fork(ctx.len() as u64);
        let fitted = gp_fit(ctx, self.kernel, &mut rng).and_then(|hp| GpModel::condition(ctx, hp));
        self.state = Some(match fitted {
            Ok(model) => GpState::Fitted {
                model: Box::new(model),
                space: ctx.space().clone(),
            },
            Err(e) => {
                log::warn!("{} fit failed ({e}); using the prior-mean posterior", self.name());
                let norm = NormalizationState::from_context(ctx);
                GpState::PriorMean(GaussianPosterior {
                    mean: norm.output_mean,
                    std: if ctx.len() > 1 { norm.output_std } else { 0.0 },
                })
            }
        });
        Ok(())
    }

    fn predict_batch(&self, queries: &[DesignPoint]) -> Result<Vec<DiscretePosterior>> {
        self.predict_gaussian(queries)?
            .into_iter()
            .map(|g| gaussian_to_discrete(g, self.bins))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let hp = GpHyperparams::new(KernelKind::Matern52, 1.0, 1.0, 1e-6);
        let v = kernel_eval(&hp, &[0.0], &[1.0]);
        let want = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((v - want).abs() < 1e-14);
        assert!((v - 0.52399).abs() < 1e-5);

        let rbf = GpHyperparams::new(KernelKind::Rbf, 0.3, 2.0, 1e-6);
        assert_eq!(kernel_eval(&rbf, &[0.2, 0.4], &[0.2, 0.4]), 2.0);
        assert!(kernel_eval(&rbf, &[0.0], &[1e3]) < 1e-300);

        let lin = GpHyperparams::new(KernelKind::Linear, 1.0, 2.0, 1e-6);
        assert!((kernel_eval(&lin, &[0.5, 1.0], &[0.5, 1.0]) - (2.0 * 1.25 + LINEAR_BIAS)).abs() < 1e-15);
    }

    #[test]
    fn hyperparams_are_clamped() {
        let hp = GpHyperparams::new(KernelKind::Rbf, 1e-9, 1.0, 1e-20);
        assert!((hp.lengthscale() - 1e-3).abs() < 1e-15);
        assert!(hp.noise_variance() >= 1e-8 * (1.0 - 1e-12));
    }

    #[test]
    fn jitter_rescues_singular_gram() {
        // Duplicate points with zero noise are singular.
        let k = DMatrix::from_element(3, 3, 1.0);
        let (l, jitter) = cholesky_with_jitter(&k).unwrap();
        assert!(jitter > 0.0);
        assert!(((&l * l.transpose()) - (k + DMatrix::identity(3, 3) * jitter)).norm() < 1e-12);
    }
}
