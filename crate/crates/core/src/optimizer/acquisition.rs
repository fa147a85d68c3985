//! Candidate scoring for the three multi-specification strategies.
//!
//! Every function here takes backends whose context has already been set and
//! issues exactly one batched prediction per backend, so the number of
//! surrogate queries is `candidates.len()` times the number of backends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{fom_values, SpecSet};
use crate::posterior::{closed_form_ei, dei, feasibility_mass, moments, DiscretePosterior, GaussianPosterior};
use crate::rng::Rng;
use crate::space::DesignPoint;
use crate::surrogate::SurrogateBackend;

/// Improvement rule applied to a predictive posterior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    /// Closed-form Gaussian EI over the posterior's mean and variance.
    Ei,
    /// Exact expected improvement summed over the posterior's bins.
    Dei,
}

impl Acquisition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Acquisition::Ei => "ei",
            Acquisition::Dei => "dei",
        }
    }

    /// Expected improvement of `p` over `f_star` under this rule.
    pub fn improvement(&self, p: &DiscretePosterior, f_star: f64) -> f64 {
        match self {
            Acquisition::Dei => dei(p, f_star),
            Acquisition::Ei => {
                let (mean, var) = moments(p);
                closed_form_ei(GaussianPosterior { mean, std: var.sqrt() }, f_star)
            }
        }
    }
}

impl std::str::FromStr for Acquisition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ei" => Ok(Acquisition::Ei),
            "dei" => Ok(Acquisition::Dei),
            other => Err(Error::Config(format!("unknown acquisition `{other}`"))),
        }
    }
}

impl std::fmt::Display for Acquisition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Acquisition values in candidate order plus the predictions spent on them.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub queries: usize,
}

fn predict(backend: &dyn SurrogateBackend, candidates: &[DesignPoint]) -> Result<Vec<DiscretePosterior>> {
    let posteriors = backend.predict_batch(candidates)?;
    if posteriors.len() != candidates.len() {
        return Err(Error::Contract(format!(
            "backend {} returned {} posteriors for {} queries",
            backend.name(),
            posteriors.len(),
            candidates.len()
        )));
    }
    Ok(posteriors)
}

/// One surrogate over the scalar figure of merit.
pub fn acquire_direct(
    backend: &dyn SurrogateBackend,
    candidates: &[DesignPoint],
    acq: Acquisition,
    f_star: f64,
) -> Result<Scored> {
    let posteriors = predict(backend, candidates)?;
    Ok(Scored {
        scores: posteriors.iter().map(|p| acq.improvement(p, f_star)).collect(),
        queries: candidates.len(),
    })
}

/// One surrogate per metric, in spec order. Each candidate's score is the
/// Monte Carlo mean of `max(0, fom(sample) - f*)` over `samples` joint draws,
/// with every metric drawn independently by inverse CDF from its posterior.
///
/// Under [`Acquisition::Ei`] each metric posterior is replaced by the Gaussian
/// with the same mean and variance before sampling.
pub fn acquire_metric_decomposed(
    backends: &[&dyn SurrogateBackend],
    candidates: &[DesignPoint],
    specs: &SpecSet,
    acq: Acquisition,
    f_star: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<Scored> {
    if backends.len() != specs.len() {
        return Err(Error::Contract(format!(
            "{} metric backends for {} specifications",
            backends.len(),
            specs.len()
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one joint sample".into()));
    }
    let per_metric: Vec<Vec<DiscretePosterior>> = backends
        .iter()
        .map(|b| predict(*b, candidates))
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(candidates.len());
    let mut joint = vec![0.0; specs.len()];
    for i in 0..candidates.len() {
        let mut total = 0.0;
        match acq {
            Acquisition::Dei => {
                let cdfs: Vec<Vec<f64>> = per_metric.iter().map(|ps| ps[i].cumulative()).collect();
                for _ in 0..samples {
                    for (j, cdf) in cdfs.iter().enumerate() {
                        joint[j] = per_metric[j][i].quantile_with(cdf, rng.uniform());
                    }
                    total += (fom_values(specs, &joint)? - f_star).max(0.0);
                }
            }
            Acquisition::Ei => {
                let gauss: Vec<(f64, f64)> = per_metric
                    .iter()
                    .map(|ps| {
                        let (m, v) = moments(&ps[i]);
                        (m, v.sqrt())
                    })
                    .collect();
                for _ in 0..samples {
                    for (j, (m, s)) in gauss.iter().enumerate() {
                        joint[j] = m + s * rng.normal();
                    }
                    total += (fom_values(specs, &joint)? - f_star).max(0.0);
                }
            }
        }
        scores.push(total / samples as f64);
    }
    Ok(Scored {
        scores,
        queries: candidates.len() * backends.len(),
    })
}

/// One surrogate for the objective score and one per hard-constraint margin.
/// Score = improvement of the objective over `f_star_objective` times the
/// product of the margins' feasibility masses (mass at or above zero).
///
/// The acquisition rule only changes the objective term; feasibility is
/// always read from the binned margin posteriors.
pub fn acquire_constraint_decomposed(
    objective: &dyn SurrogateBackend,
    margins: &[&dyn SurrogateBackend],
    candidates: &[DesignPoint],
    acq: Acquisition,
    f_star_objective: f64,
) -> Result<Scored> {
    let obj = predict(objective, candidates)?;
    let margin_posts: Vec<Vec<DiscretePosterior>> =
        margins.iter().map(|b| predict(*b, candidates)).collect::<Result<_>>()?;
    let scores = (0..candidates.len())
        .map(|i| {
            let feasible: f64 = margin_posts.iter().map(|ps| feasibility_mass(&ps[i], 0.0)).product();
            acq.improvement(&obj[i], f_star_objective) * feasible
        })
        .collect();
    Ok(Scored {
        scores,
        queries: candidates.len() * (margins.len() + 1),
    })
}

/// Index of the largest score; ties (and an all-NaN set) resolve to the
/// lowest index. NaN scores never win.
pub fn select_next(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    Ok(best)
}
