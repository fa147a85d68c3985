//! Design spaces, design points and the sampling plans used to explore them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Axis-aligned box of continuous design variables in natural units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidSpace(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!(
                    "dimension {j}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn midpoint(&self) -> DesignPoint {
        let coords = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        DesignPoint { coords }
    }

    /// Builds a point, clamping every coordinate into its bounds.
    pub fn point(&self, coords: Vec<f64>) -> Result<DesignPoint> {
        if coords.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, space has {}",
                coords.len(),
                self.dim()
            )));
        }
        if let Some(j) = coords.iter().position(|c| c.is_nan()) {
            return Err(Error::InvalidArgument(format!("coordinate {j} is NaN")));
        }
        let coords = coords
            .into_iter()
            .enumerate()
            .map(|(j, c)| c.clamp(self.lower[j], self.upper[j]))
            .collect();
        Ok(DesignPoint { coords })
    }

    pub fn contains(&self, p: &DesignPoint) -> bool {
        p.dim() == self.dim()
            && p.coords
                .iter()
                .enumerate()
                .all(|(j, &c)| c >= self.lower[j] && c <= self.upper[j])
    }

    /// Affine map of a point into `[0, 1]^dim`.
    pub fn normalize(&self, p: &DesignPoint) -> Vec<f64> {
        p.coords
            .iter()
            .enumerate()
            .map(|(j, &c)| (c - self.lower[j]) / self.width(j))
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> DesignPoint {
        let coords = unit
            .iter()
            .enumerate()
            .map(|(j, &u)| (self.lower[j] + u * self.width(j)).clamp(self.lower[j], self.upper[j]))
            .collect();
        DesignPoint { coords }
    }
}

/// A point inside a [`DesignSpace`]. Only constructed through the space, so its
/// coordinates are always in bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint {
    coords: Vec<f64>,
}

impl DesignPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Index<usize> for DesignPoint {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.coords[j]
    }
}

/// `n` points with every coordinate independently uniform in its bounds.
pub fn uniform_sample(space: &DesignSpace, n: usize, rng: &mut Rng) -> Vec<DesignPoint> {
    (0..n)
        .map(|_| {
            let coords = (0..space.dim())
                .map(|j| rng.uniform_range(space.lower[j], space.upper[j]))
                .collect();
            DesignPoint { coords }
        })
        .collect()
}

/// Latin hypercube design: along every dimension the `n` samples occupy the `n`
/// equal-width strata exactly once, jittered within their stratum.
pub fn latin_hypercube(space: &DesignSpace, n: usize, rng: &mut Rng) -> Vec<DesignPoint> {
    let dim = space.dim();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut strata);
        let w = space.width(j) / n as f64;
        let col = strata
            .into_iter()
            .map(|s| {
                let v = space.lower[j] + (s as f64 + rng.uniform()) * w;
                // Round-off can push the top stratum past the bound.
                v.min(space.upper[j])
            })
            .collect();
        columns.push(col);
    }
    (0..n)
        .map(|i| DesignPoint {
            coords: columns.iter().map(|c| c[i]).collect(),
        })
        .collect()
}

/// Index partition produced by [`train_test_split`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random partition of `n` observations with `round(train_fraction * n)` on
/// the training side. Both sides are returned in ascending index order.
pub fn train_test_split(n: usize, train_fraction: f64, rng: &mut Rng) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 observations to split, got {n}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} at fraction {train_fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
