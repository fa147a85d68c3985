//! Kernel-weighted histogram surrogate.
//!
//! Each query's posterior is a smoothed histogram of the context outputs,
//! weighted by input-space proximity. Unlike a GP it can be skewed or
//! multimodal, which makes it a useful stand-in for a learned distributional
//! model.

use serde::{Deserialize, Serialize};

use super::{Context, SurrogateBackend};
use crate::error::{Error, Result};
use crate::posterior::DiscretePosterior;
use crate::space::DesignPoint;

/// Fraction of the output range added on each side of the bin grid.
pub const RANGE_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy {
    /// Median pairwise distance between context inputs.
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug)]
struct Fitted {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    space: crate::space::DesignSpace,
    bandwidth: f64,
    centers: Vec<f64>,
    lo: f64,
    width: f64,
}

#[derive(Clone, Debug)]
pub struct KhistBackend {
    bins: usize,
    policy: BandwidthPolicy,
    fitted: Option<Fitted>,
}

impl KhistBackend {
    pub fn new(bins: usize, policy: BandwidthPolicy) -> Self {
        Self {
            bins: bins.max(1),
            policy,
            fitted: None,
        }
    }

    /// Bandwidth in effect for the current context.
    pub fn bandwidth(&self) -> Option<f64> {
        self.fitted.as_ref().map(|f| f.bandwidth)
    }

    fn predict_unit(&self, f: &Fitted, q: &[f64]) -> Result<DiscretePosterior> {
        let k = self.bins;
        let h2 = 2.0 * f.bandwidth * f.bandwidth;
        let sq: Vec<f64> = f
            .inputs
            .iter()
            .map(|x| x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        // Shift by the nearest distance so at least one weight is exactly 1
        // even when the bandwidth is tiny.
        let d_min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = sq.iter().map(|d| (-(d - d_min) / h2).exp()).collect();
        let total: f64 = weights.iter().sum();

        let alpha = 1e-3 / k as f64;
        let mut mass = vec![alpha; k];
        for (w, y) in weights.iter().zip(&f.outputs) {
            let idx = (((y - f.lo) / f.width) as usize).min(k - 1);
            mass[idx] += w / total;
        }
        DiscretePosterior::from_weights(f.centers.clone(), mass)
    }
}

fn median_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in 0..i {
            d.push(
                x[i].iter()
                    .zip(&x[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let m = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if m > 1e-12 {
        m
    } else {
        1.0
    }
}

impl SurrogateBackend for KhistBackend {
    fn name(&self) -> String {
        "khist".to_string()
    }

    fn set_context(&mut self, ctx: &Context) -> Result<()> {
        if ctx.is_empty() {
            return Err(Error::Fit("khist needs a nonempty context".into()));
        }
        let ys = ctx.outputs();
        let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = y_max - y_min;
        let margin = if range > 0.0 { RANGE_MARGIN * range } else { 1.0 };
        let lo = y_min - margin;
        let width = (y_max + margin - lo) / self.bins as f64;
        let centers = (0..self.bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
        let bandwidth = match self.policy {
            BandwidthPolicy::Median => median_pairwise_distance(ctx.inputs()),
            BandwidthPolicy::Fixed(h) if h > 0.0 && h.is_finite() => h,
            BandwidthPolicy::Fixed(h) => {
                return Err(Error::Config(format!("khist bandwidth must be positive, got {h}")))
            }
        };
        self.fitted = Some(Fitted {
            inputs: ctx.inputs().to_vec(),
            outputs: ys.to_vec(),
            space: ctx.space().clone(),
            bandwidth,
            centers,
            lo,
            width,
        });
        Ok(())
    }

    fn predict_batch(&self, queries: &[DesignPoint]) -> Result<Vec<DiscretePosterior>> {
        let f = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::Contract("predict before set_context".into()))?;
        queries
            .iter()
            .map(|q| self.predict_unit(f, &f.space.normalize(q)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DesignSpace;

    fn ctx(xs: &[f64], ys: &[f64]) -> Context {
        let space = DesignSpace::unit(1).unwrap();
        let pts: Vec<_> = xs.iter().map(|&x| space.point(vec![x]).unwrap()).collect();
        Context::new(&space, &pts, ys).unwrap()
    }

    fn pt(x: f64) -> DesignPoint {
        DesignSpace::unit(1).unwrap().point(vec![x]).unwrap()
    }

    #[test]
    fn constant_outputs_concentrate_in_one_bin() {
        let mut b = KhistBackend::new(50, BandwidthPolicy::Median);
        b.set_context(&ctx(&[0.1, 0.5, 0.9], &[3.0; 3])).unwrap();
        let p = &b.predict_batch(&[pt(0.3)]).unwrap()[0];
        let (i, &top) = p.probs().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!(1.0 - top <= 1e-3);
        let half = (p.centers()[1] - p.centers()[0]) / 2.0;
        assert!((p.centers()[i] - 3.0).abs() <= half);
    }

    #[test]
    fn bimodal_context_gives_two_modes() {
        let xs = [0.0, 0.05, 0.1, 0.9, 0.95, 1.0];
        let ys = [0.0, 0.1, -0.1, 10.0, 10.1, 9.9];
        let mut b = KhistBackend::new(20, BandwidthPolicy::Median);
        b.set_context(&ctx(&xs, &ys)).unwrap();
        let p = &b.predict_batch(&[pt(0.5)]).unwrap()[0];
        let low: f64 = p
            .centers()
            .iter()
            .zip(p.probs())
            .filter(|(c, _)| **c < 5.0)
            .map(|(_, p)| p)
            .sum();
        assert!(low >= 0.4 && 1.0 - low >= 0.4, "low mass {low}");
        // Direct weight computation: symmetric weights give exactly half each,
        // up to the smoothing spread evenly over the bins.
        assert!((low - 0.5).abs() < 1e-9);
    }

    #[test]
    fn small_bandwidth_selects_nearest_point() {
        let mut b = KhistBackend::new(10, BandwidthPolicy::Fixed(1e-4));
        b.set_context(&ctx(&[0.2, 0.8], &[0.0, 1.0])).unwrap();
        let p = &b.predict_batch(&[pt(0.2)]).unwrap()[0];
        assert!(p.probs()[0] > 0.99);
    }
}
