//! Specification scoring and the scalar figure of merit.
//!
//! Each specification contributes a normalized score `s_i`. Hard constraints
//! are clipped at 1 (`min(f/C, 1)` or `min(C/f, 1)`); optimization targets are
//! clipped the same way until every hard constraint of the evaluated design is
//! met, after which they contribute the unclipped ratio. The figure of merit is
//! the plain sum of the scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metric values at or below this are clamped before ratio scoring.
pub const METRIC_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    HardConstraint,
    OptimizationTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecItem {
    pub name: String,
    pub direction: Direction,
    pub threshold: f64,
    pub role: Role,
}

impl SpecItem {
    pub fn new(name: &str, direction: Direction, threshold: f64, role: Role) -> Result<Self> {
        let item = Self {
            name: name.to_string(),
            direction,
            threshold,
            role,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn hard(name: &str, direction: Direction, threshold: f64) -> Result<Self> {
        Self::new(name, direction, threshold, Role::HardConstraint)
    }

    pub fn target(name: &str, direction: Direction, threshold: f64) -> Result<Self> {
        Self::new(name, direction, threshold, Role::OptimizationTarget)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("spec name must not be empty".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "spec `{}`: threshold must be finite and strictly positive, got {}",
                self.name, self.threshold
            )));
        }
        Ok(())
    }

    pub fn is_hard(&self) -> bool {
        self.role == Role::HardConstraint
    }

    /// Raw satisfaction of the threshold, independent of role.
    pub fn is_met(&self, value: f64) -> bool {
        match self.direction {
            Direction::Maximize => value >= self.threshold,
            Direction::Minimize => value <= self.threshold,
        }
    }

    /// Unclipped normalized ratio (`f/C` or `C/f`).
    pub fn ratio(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::DegenerateMetric {
                name: self.name.clone(),
                reason: format!("value {value} is not finite"),
            });
        }
        let v = if value < METRIC_FLOOR {
            log::warn!(
                "metric `{}` = {value:e} is below the scoring floor; clamped to {METRIC_FLOOR:e}",
                self.name
            );
            METRIC_FLOOR
        } else {
            value
        };
        Ok(match self.direction {
            Direction::Maximize => v / self.threshold,
            Direction::Minimize => self.threshold / v,
        })
    }
}

/// Normalized score of one specification.
pub fn score_item(spec: &SpecItem, value: f64, all_hard_met: bool) -> Result<f64> {
    let ratio = spec.ratio(value)?;
    let clipped = spec.is_hard() || !all_hard_met;
    if !clipped {
        return Ok(ratio);
    }
    if spec.is_met(value) {
        Ok(1.0)
    } else {
        Ok(ratio.min(1.0))
    }
}

/// Signed distance of a hard-constraint metric from its threshold;
/// nonnegative exactly when the constraint holds.
pub fn constraint_margin(spec: &SpecItem, value: f64) -> Result<f64> {
    if !spec.is_hard() {
        return Err(Error::Contract(format!(
            "constraint margin requested for optimization target `{}`",
            spec.name
        )));
    }
    Ok(match spec.direction {
        Direction::Maximize => value - spec.threshold,
        Direction::Minimize => spec.threshold - value,
    })
}

/// Ordered, uniquely named specifications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SpecItem>", into = "Vec<SpecItem>")]
pub struct SpecSet {
    items: Vec<SpecItem>,
}

impl SpecSet {
    pub fn new(items: Vec<SpecItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("a spec set needs at least one item".into()));
        }
        for (i, item) in items.iter().enumerate() {
            item.validate()?;
            if items[..i].iter().any(|o| o.name == item.name) {
                return Err(Error::Config(format!("duplicate spec name `{}`", item.name)));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[SpecItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SpecItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.name.as_str())
    }

    pub fn hard_constraints(&self) -> impl Iterator<Item = &SpecItem> {
        self.items.iter().filter(|i| i.is_hard())
    }

    pub fn targets(&self) -> impl Iterator<Item = &SpecItem> {
        self.items.iter().filter(|i| !i.is_hard())
    }

    pub fn hard_count(&self) -> usize {
        self.hard_constraints().count()
    }

    /// The single optimization target used by constrained reporting and the
    /// constraint-decomposed strategy.
    pub fn primary_target(&self) -> Result<&SpecItem> {
        let mut targets = self.targets();
        match (targets.next(), targets.next()) {
            (Some(t), None) => Ok(t),
            (None, _) => Err(Error::Config("spec set has no optimization target".into())),
            (Some(_), Some(_)) => Err(Error::Config("spec set has more than one optimization target".into())),
        }
    }

    /// Replaces thresholds by name; unknown names are a configuration error.
    pub fn with_thresholds(&self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut items = self.items.clone();
        for (name, threshold) in overrides {
            let item = items
                .iter_mut()
                .find(|i| &i.name == name)
                .ok_or_else(|| Error::Config(format!("override for unknown spec `{name}`")))?;
            item.threshold = *threshold;
        }
        Self::new(items)
    }

    pub fn all_hard_met(&self, metrics: &MetricVector) -> Result<bool> {
        for item in self.hard_constraints() {
            if !item.is_met(metrics.require(&item.name)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl TryFrom<Vec<SpecItem>> for SpecSet {
    type Error = Error;

    fn try_from(items: Vec<SpecItem>) -> Result<Self> {
        Self::new(items)
    }
}

impl From<SpecSet> for Vec<SpecItem> {
    fn from(s: SpecSet) -> Self {
        s.items
    }
}

/// Metric values keyed by specification name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricVector {
    values: BTreeMap<String, f64>,
}

impl MetricVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("metric `{name}` is missing")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks that the keys match `specs` exactly and every value is finite.
    pub fn validate_against(&self, specs: &SpecSet) -> Result<()> {
        for name in specs.names() {
            let v = self.require(name)?;
            if !v.is_finite() {
                return Err(Error::DegenerateMetric {
                    name: name.to_string(),
                    reason: format!("value {v} is not finite"),
                });
            }
        }
        if let Some((extra, _)) = self.iter().find(|(k, _)| specs.get(k).is_none()) {
            return Err(Error::Config(format!("metric `{extra}` has no specification")));
        }
        Ok(())
    }
}

impl FromIterator<(String, f64)> for MetricVector {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self {
            values: iter.into_iter().collect(),
        }
    }
}

/// Figure of merit: the sum of all specification scores.
pub fn fom(specs: &SpecSet, metrics: &MetricVector) -> Result<f64> {
    let all_hard_met = specs.all_hard_met(metrics)?;
    specs
        .items()
        .iter()
        .map(|item| score_item(item, metrics.require(&item.name)?, all_hard_met))
        .sum()
}

/// [`fom`] over values given in spec order, without building a map. Used on
/// hot paths such as joint posterior sampling.
pub fn fom_values(specs: &SpecSet, values: &[f64]) -> Result<f64> {
    if values.len() != specs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for {} specifications",
            values.len(),
            specs.len()
        )));
    }
    let all_hard_met = specs
        .items()
        .iter()
        .zip(values)
        .all(|(item, &v)| !item.is_hard() || item.is_met(v));
    specs
        .items()
        .iter()
        .zip(values)
        .map(|(item, &v)| score_item(item, v, all_hard_met))
        .sum()
}

/// Unclipped score of the primary target; the objective modeled by the
/// constraint-decomposed strategy.
pub fn objective_score(specs: &SpecSet, metrics: &MetricVector) -> Result<f64> {
    let target = specs.primary_target()?;
    target.ratio(metrics.require(&target.name)?)
}
