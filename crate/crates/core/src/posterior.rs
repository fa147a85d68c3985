//! Binned predictive distributions and the expected-improvement rules that
//! consume them.
//!
//! A [`DiscretePosterior`] is a piecewise-constant predictive distribution:
//! ascending bin centers `c_k` with masses `p_k`. Expected improvement over an
//! incumbent `f*` is then an exact finite sum, [`dei`], which needs no Gaussian
//! assumption. [`closed_form_ei`] is the classical two-moment rule, and
//! [`discretize_gaussian`] bridges the two: refining a discretized Gaussian
//! makes [`dei`] converge to [`closed_form_ei`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of bins.
pub const DEFAULT_BINS: usize = 100;

/// Default half-width, in standard deviations, of a discretized Gaussian.
pub const DEFAULT_SPAN_SIGMAS: f64 = 8.0;

/// Largest deviation of the probability sum from 1 that is silently
/// renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePosterior {
    centers: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscretePosterior {
    /// Validates and renormalizes. The probabilities must already sum to 1
    /// within [`NORMALIZATION_TOLERANCE`].
    pub fn new(centers: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&centers, &probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Normalization {
                sum,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        Ok(Self::renormalized(centers, probs, sum))
    }

    /// Builds a posterior from arbitrary nonnegative weights with a positive
    /// total.
    pub fn from_weights(centers: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&centers, &weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidPosterior(format!("weights sum to {sum}")));
        }
        Ok(Self::renormalized(centers, weights, sum))
    }

    pub fn point_mass(value: f64) -> Self {
        Self {
            centers: vec![value],
            probs: vec![1.0],
        }
    }

    fn validate_shape(centers: &[f64], probs: &[f64]) -> Result<()> {
        if centers.is_empty() {
            return Err(Error::InvalidPosterior("no bins".into()));
        }
        if centers.len() != probs.len() {
            return Err(Error::InvalidPosterior(format!(
                "{} centers but {} probabilities",
                centers.len(),
                probs.len()
            )));
        }
        if let Some(k) = centers.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidPosterior(format!("center {k} is not finite")));
        }
        if let Some(k) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPosterior(format!(
                "probability {k} is {} (must be finite and nonnegative)",
                probs[k]
            )));
        }
        if let Some(k) = centers.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::NonAscending { index: k + 1 });
        }
        Ok(())
    }

    fn renormalized(centers: Vec<f64>, mut probs: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Self { centers, probs }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same distribution moved by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let centers = self.centers.iter().map(|c| c + offset).collect();
        Self::new(centers, self.probs.clone())
    }

    /// Cumulative masses, ending at exactly 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        cdf
    }

    /// Inverse-CDF lookup of `u` in `[0, 1)` against a precomputed
    /// [`cumulative`](Self::cumulative).
    pub fn quantile_with(&self, cumulative: &[f64], u: f64) -> f64 {
        let k = cumulative.partition_point(|&c| c <= u);
        self.centers[k.min(self.centers.len() - 1)]
    }
}

/// Predictive mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub std: f64,
}

impl GaussianPosterior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
            return Err(Error::InvalidPosterior(format!(
                "gaussian needs finite mean and std >= 0, got ({mean}, {std})"
            )));
        }
        Ok(Self { mean, std })
    }
}

/// Mean and variance of a binned posterior.
pub fn moments(p: &DiscretePosterior) -> (f64, f64) {
    let mean: f64 = p.centers.iter().zip(&p.probs).map(|(c, w)| c * w).sum();
    let var: f64 = p
        .centers
        .iter()
        .zip(&p.probs)
        .map(|(c, w)| (c - mean) * (c - mean) * w)
        .sum();
    (mean, var.max(0.0))
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(z)`, accurate for large positive `z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Closed-form expected improvement of a Gaussian over `f_star`.
pub fn closed_form_ei(g: GaussianPosterior, f_star: f64) -> f64 {
    let diff = g.mean - f_star;
    if g.std <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / g.std;
    // σ(zΦ(z) + φ(z)) is algebraically (μ - f*)Φ(z) + σφ(z).
    (g.std * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

/// Exact expected improvement under a binned posterior:
/// `Σ_k max(0, c_k - f*) p_k`. Linear in the number of bins.
pub fn dei(p: &DiscretePosterior, f_star: f64) -> f64 {
    let first = p.centers.partition_point(|&c| c <= f_star);
    p.centers[first..]
        .iter()
        .zip(&p.probs[first..])
        .map(|(c, w)| (c - f_star) * w)
        .sum()
}

/// Total mass on bins whose center is at or above `threshold`.
pub fn feasibility_mass(p: &DiscretePosterior, threshold: f64) -> f64 {
    let first = p.centers.partition_point(|&c| c < threshold);
    p.probs[first..].iter().sum::<f64>().clamp(0.0, 1.0)
}

/// `K` equal-width bins over `μ ± span·σ`, centered at the bin midpoints, with
/// the exact Gaussian mass of each bin and both tails folded into the end bins.
pub fn discretize_gaussian(g: GaussianPosterior, bins: usize, span_sigmas: f64) -> Result<DiscretePosterior> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if !(span_sigmas > 0.0 && span_sigmas.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "span must be positive, got {span_sigmas}"
        )));
    }
    if !(g.std > 0.0) {
        return Err(Error::InvalidArgument(
            "cannot discretize a zero-variance gaussian; use a point mass".into(),
        ));
    }
    let width = 2.0 * span_sigmas / bins as f64;
    let edge = |i: usize| -span_sigmas + width * i as f64;
    let mut probs = Vec::with_capacity(bins);
    for i in 0..bins {
        let (a, b) = (edge(i), edge(i + 1));
        // Take differences on whichever tail keeps the terms small.
        let mass = if b <= 0.0 {
            normal_cdf(b) - normal_cdf(a)
        } else if a >= 0.0 {
            normal_sf(a) - normal_sf(b)
        } else {
            1.0 - normal_cdf(a) - normal_sf(b)
        };
        probs.push(mass.max(0.0));
    }
    probs[0] += normal_cdf(-span_sigmas);
    probs[bins - 1] += normal_sf(span_sigmas);

    let centers: Vec<f64> = (0..bins).map(|i| g.mean + g.std * (edge(i) + 0.5 * width)).collect();
    if centers.windows(2).any(|w| !(w[0] < w[1])) {
        // σ is below the floating-point resolution of μ.
        return Ok(DiscretePosterior::point_mass(g.mean));
    }
    DiscretePosterior::from_weights(centers, probs)
}

/// Discretizes a Gaussian, or returns a point mass when it has no spread.
pub fn gaussian_to_discrete(g: GaussianPosterior, bins: usize) -> Result<DiscretePosterior> {
    if g.std > 0.0 {
        discretize_gaussian(g, bins, DEFAULT_SPAN_SIGMAS)
    } else {
        Ok(DiscretePosterior::point_mass(g.mean))
    }
}
