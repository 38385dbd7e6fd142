use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::pce::{PceBasis, PceVector, Tag};

/// Closed-loop input from the first-step input coefficients: the
/// initial-condition block evaluated at the fitted germs of past disturbances.
pub fn realize_feedback(
    u_first: &PceVector,
    basis: &PceBasis,
    germs: &BTreeMap<Tag, Vec<f64>>,
) -> Result<DVector<f64>> {
    if u_first.len() != basis.len() {
        return Err(Error::dim("input coefficients do not match basis"));
    }
    let lx = basis.lx();
    let phi = basis.eval_prefix(lx, germs)?;
    let c = u_first.coeffs();
    let mut u = DVector::zeros(u_first.dim());
    for (j, p) in phi.iter().enumerate() {
        u += c.column(j) * *p;
    }
    Ok(u)
}
