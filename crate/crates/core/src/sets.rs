use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-coordinate box `lower ≤ z ≤ upper`; coordinates with `enabled[i] ==
/// false` are unconstrained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub enabled: Vec<bool>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, enabled: Vec<bool>) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n || enabled.len() != n {
            return Err(Error::dim("box bounds and mask lengths differ"));
        }
        for i in 0..n {
            if enabled[i] && !(lower[i] <= upper[i] && lower[i].is_finite() && upper[i].is_finite()) {
                return Err(Error::arg(format!("invalid bounds on coordinate {i}")));
            }
        }
        Ok(Self {
            lower,
            upper,
            enabled,
        })
    }

    /// Symmetric box `[-r_i, r_i]` on every coordinate.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        Self::new(
            radius.iter().map(|r| -r).collect(),
            radius.to_vec(),
            vec![true; radius.len()],
        )
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![0.0; dim],
            enabled: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Enabled coordinates with their bounds.
    pub fn active(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.dim())
            .filter(|&i| self.enabled[i])
            .map(|i| (i, self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.active().all(|(i, lo, hi)| z[i] >= lo && z[i] <= hi)
    }

    /// Per-coordinate violation indicators (false when disabled).
    pub fn violations(&self, z: &[f64]) -> Vec<bool> {
        (0..self.dim())
            .map(|i| self.enabled[i] && (z[i] < self.lower[i] || z[i] > self.upper[i]))
            .collect()
    }
}
