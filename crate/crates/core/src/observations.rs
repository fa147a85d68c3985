use serde::{Deserialize, Serialize};

use crate::space::DesignPoint;

/// Append-only evaluation history with its running incumbent (the maximum).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ObservationSet {
    points: Vec<DesignPoint>,
    values: Vec<f64>,
    incumbent: Option<usize>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: DesignPoint, value: f64) {
        let idx = self.values.len();
        self.points.push(point);
        self.values.push(value);
        // Strict comparison keeps the earliest maximizer on ties.
        match self.incumbent {
            Some(best) if !(value > self.values[best]) => {}
            _ => self.incumbent = Some(idx),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn incumbent_index(&self) -> Option<usize> {
        self.incumbent
    }

    pub fn incumbent_value(&self) -> Option<f64> {
        self.incumbent.map(|i| self.values[i])
    }

    pub fn incumbent_point(&self) -> Option<&DesignPoint> {
        self.incumbent.map(|i| &self.points[i])
    }
}
