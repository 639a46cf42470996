//! One-way marginals and the two error metrics used throughout.

use serde::{Deserialize, Serialize};

use crate::database::Dataset;
use crate::error::{ensure_dims, Error, Result};
use crate::numeric::compensated_sum;

/// `d` values in `[-1, 1]`: true marginals or a mechanism's released answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalVector(Vec<f64>);

impl MarginalVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("marginal vector must have d >= 1 entries"));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("marginal value {v} outside [-1, 1]")));
        }
        Ok(MarginalVector(values))
    }

    /// Clamps every coordinate into `[-1, 1]`. NaN is rejected.
    pub fn clamped(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("NaN in released marginals"));
        }
        Self::new(values.into_iter().map(crate::numeric::clamp_unit).collect())
    }

    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
        MarginalVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for MarginalVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Column means `(1/n) Σ_i D_i`.
pub fn compute_marginals(db: &dyn Dataset) -> MarginalVector {
    db.marginals().clone()
}

pub fn l1_error(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_dims(a.len(), b.len())?;
    Ok(compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs())))
}

pub fn linf_error(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_dims(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
