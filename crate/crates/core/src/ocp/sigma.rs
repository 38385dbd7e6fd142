use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// How chance constraints are tightened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Two-sided standard-normal quantile `Φ⁻¹(1 − ε/2)`.
    Gaussian,
    /// `√((2 − ε)/ε)`, valid for any distribution.
    DistributionFree,
}

/// Tightening factor `σ(ε)` for a per-coordinate chance constraint.
pub fn chance_sigma(mode: SigmaMode, epsilon: f64) -> Result<f64> {
    match mode {
        SigmaMode::Gaussian if epsilon > 0.0 && epsilon < 1.0 => {
            let n = Normal::standard();
            Ok(n.inverse_cdf(1.0 - 0.5 * epsilon))
        }
        SigmaMode::DistributionFree if epsilon > 0.0 && epsilon <= 1.0 => {
            Ok(((2.0 - epsilon) / epsilon).sqrt())
        }
        _ => Err(Error::arg(format!(
            "violation probability {epsilon} out of range for {mode:?}"
        ))),
    }
}
