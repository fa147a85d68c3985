//! Scalar summaries of regression fits and optimization traces.

use famopt_core::fom::Direction;
use famopt_core::optimizer::RunTrace;

use crate::error::{HarnessError, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`, with `SS_tot` taken
/// about the mean of `truths`. Negative when the predictions do worse than
/// predicting that mean.
pub fn r_squared(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(HarnessError::Invalid(format!(
            "r_squared needs equal nonempty lengths, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(HarnessError::UndefinedVariance);
    }
    let ss_res: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// How the convergence threshold is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// `fraction` times the best figure of merit in the comparison group.
    FractionOfBest {
        fraction: f64,
        best: f64,
    },
    Absolute(f64),
}

impl Threshold {
    pub fn value(&self) -> f64 {
        match *self {
            Threshold::FractionOfBest { fraction, best } => fraction * best,
            Threshold::Absolute(v) => v,
        }
    }
}

/// First 1-based evaluation count whose incumbent reaches the threshold, or
/// `None` when the trace never gets there. Initial designs count.
pub fn itr_at_threshold(trace: &RunTrace, threshold: Threshold) -> Option<usize> {
    let level = threshold.value();
    trace
        .records
        .iter()
        .position(|r| r.incumbent_fom >= level)
        .map(|i| i + 1)
}

/// Table rendering of [`itr_at_threshold`]: the count, or `"{budget}+"`.
pub fn render_itr(itr: Option<usize>, budget: usize) -> String {
    match itr {
        Some(n) => n.to_string(),
        None => format!("{budget}+"),
    }
}

/// Ratio of the constrained best objectives of `baseline` and `candidate`
/// after `checkpoint` evaluations, oriented so that values above 1 favor
/// `candidate`: `baseline / candidate` when minimizing, the inverse when
/// maximizing.
pub fn improvement_factor(
    baseline: &RunTrace,
    candidate: &RunTrace,
    direction: Direction,
    checkpoint: usize,
) -> Result<f64> {
    for t in [baseline, candidate] {
        if t.len() < checkpoint {
            return Err(HarnessError::Invalid(format!(
                "trace `{}` has {} evaluations, checkpoint is {checkpoint}",
                t.method,
                t.len()
            )));
        }
    }
    let a = baseline.constrained_objective_after(checkpoint)?.value;
    let b = candidate.constrained_objective_after(checkpoint)?.value;
    ratio(a, b, direction)
}

/// The oriented ratio behind [`improvement_factor`].
pub fn ratio(baseline: f64, candidate: f64, direction: Direction) -> Result<f64> {
    let (num, den) = match direction {
        Direction::Minimize => (baseline, candidate),
        Direction::Maximize => (candidate, baseline),
    };
    if den == 0.0 {
        return Err(HarnessError::Invalid(
            "improvement factor has a zero denominator".into(),
        ));
    }
    Ok(num / den)
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use famopt_core::optimizer::{random_search, RunConfig};
    use proptest::prelude::*;

    #[test]
    fn r_squared_examples() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0; 3], &t).unwrap(), 0.0);
        assert_eq!(r_squared(&[2.0, -1.0], &[0.0, 1.0]).unwrap(), -15.0);
        assert!(matches!(
            r_squared(&[1.0, 2.0], &[3.0, 3.0]),
            Err(HarnessError::UndefinedVariance)
        ));
        assert!(r_squared(&[], &[]).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio(3.33, 1.0, Direction::Minimize).unwrap(), 3.33);
        assert_eq!(ratio(7.23, 7.23, Direction::Maximize).unwrap(), 1.0);
        assert!(ratio(1.0, 0.0, Direction::Minimize).is_err());
    }

    fn trace(budget: usize) -> RunTrace {
        random_search(&RunConfig {
            budget,
            seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn identical_traces_factor_one() {
        let t = trace(30);
        assert_eq!(improvement_factor(&t, &t, Direction::Minimize, 30).unwrap(), 1.0);
        assert!(improvement_factor(&t, &t, Direction::Minimize, 31).is_err());
    }

    #[test]
    fn itr_examples() {
        let mut t = trace(40);
        let first = t.records[0].incumbent_fom;
        assert_eq!(itr_at_threshold(&t, Threshold::Absolute(first)), Some(1));
        assert_eq!(itr_at_threshold(&t, Threshold::Absolute(1e9)), None);
        assert_eq!(render_itr(None, 400), "400+");

        // a synthetic monotone curve that crosses 0.8 * best at evaluation 18
        for (i, r) in t.records.iter_mut().enumerate() {
            r.incumbent_fom = i as f64;
        }
        let best = 39.0;
        let th = Threshold::FractionOfBest {
            fraction: 0.8,
            best: 21.25,
        };
        assert_eq!(th.value(), 17.0);
        assert_eq!(itr_at_threshold(&t, th), Some(18));
        assert_eq!(
            itr_at_threshold(&t, Threshold::FractionOfBest { fraction: 0.8, best }),
            Some(33)
        );
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn r_squared_at_most_one(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40)
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(r) = r_squared(&p, &t) {
                prop_assert!(r <= 1.0);
            }
        }

        #[test]
        fn itr_never_grows_when_trace_extends(level in 0.0f64..8.0, cut in 1usize..40) {
            let full = trace(40);
            let mut short = full.clone();
            short.records.truncate(cut);
            let th = Threshold::Absolute(level);
            if let Some(n) = itr_at_threshold(&short, th) {
                prop_assert_eq!(itr_at_threshold(&full, th), Some(n));
            }
        }
    }
}
