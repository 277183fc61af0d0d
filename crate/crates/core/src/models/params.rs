//! Parameter vectors and admissible boxes.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Axis-aligned box `prod [min_r, max_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ParameterBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, ModelError> {
        if min.len() != max.len() || min.is_empty() {
            return Err(ModelError::InvalidParameter(format!(
                "bounds of length {} and {} do not describe a box",
                min.len(),
                max.len()
            )));
        }
        if let Some(r) = (0..min.len()).find(|&r| !(min[r] <= max[r])) {
            return Err(ModelError::InvalidParameter(format!("component {r}: min {} > max {}", min[r], max[r])));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && mu.iter().zip(self.min.iter().zip(&self.max)).all(|(m, (a, b))| a <= m && m <= b)
    }

    /// Point at relative position `u in [0, 1]^d`.
    pub fn lerp(&self, u: &[f64]) -> ParameterVector {
        let values = self.min.iter().zip(&self.max).zip(u).map(|((a, b), t)| a + t * (b - a)).collect();
        ParameterVector::new(values)
    }
}

/// A point of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector {
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn scalar(v: f64) -> Self {
        Self { values: vec![v] }
    }

    /// Errors unless the point lies in `bounds`.
    pub fn check(&self, bounds: &ParameterBox) -> Result<(), ModelError> {
        if bounds.contains(&self.values) {
            Ok(())
        } else {
            Err(ModelError::InvalidParameter(format!("{:?} lies outside {:?}..{:?}", self.values, bounds.min, bounds.max)))
        }
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}
