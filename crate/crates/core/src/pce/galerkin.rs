use nalgebra::DMatrix;

use super::basis::PceBasis;
use super::disturbance::DisturbanceModel;
use super::vector::PceVector;
use crate::error::{Error, Result};

fn check_system(a: &DMatrix<f64>, b: &DMatrix<f64>, x0: &PceVector, basis: &PceBasis) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || x0.dim() != n {
        return Err(Error::dim(format!(
            "A {:?}, B {:?}, x0 dim {}",
            a.shape(),
            b.shape(),
            x0.dim()
        )));
    }
    if x0.len() != basis.len() {
        return Err(Error::dim(format!(
            "x0 has {} columns, basis has {}",
            x0.len(),
            basis.len()
        )));
    }
    Ok(())
}

/// Propagates PCE coefficients through `x+ = A x + B u + w` for each basis
/// function, with disturbance `w_k` placed in the `k`-th horizon block.
///
/// Returns the states at steps `0..=inputs.len()`.
pub fn galerkin_propagate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x0: &PceVector,
    inputs: &[PceVector],
    basis: &PceBasis,
    w: &DisturbanceModel,
) -> Result<Vec<PceVector>> {
    check_system(a, b, x0, basis)?;
    if inputs.len() > basis.horizon() {
        return Err(Error::dim("more input steps than horizon blocks"));
    }
    let mut xs = vec![x0.clone()];
    for (k, u) in inputs.iter().enumerate() {
        if u.dim() != b.ncols() || u.len() != basis.len() {
            return Err(Error::dim(format!("input block {k} has shape {:?}", u.coeffs().shape())));
        }
        let wk = w.placed(basis, basis.horizon_tags()[k])?;
        let next = a * xs[k].coeffs() + b * u.coeffs() + wk.coeffs();
        xs.push(PceVector::new(next));
    }
    Ok(xs)
}

/// Galerkin propagation under the static feedback `u = K x`, returning states
/// at steps `0..=steps` and inputs at `0..steps`.
pub fn galerkin_closed_loop(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    x0: &PceVector,
    basis: &PceBasis,
    w: &DisturbanceModel,
    steps: usize,
) -> Result<(Vec<PceVector>, Vec<PceVector>)> {
    check_system(a, b, x0, basis)?;
    if k.shape() != (b.ncols(), a.nrows()) {
        return Err(Error::dim(format!("K has shape {:?}", k.shape())));
    }
    if steps > basis.horizon() {
        return Err(Error::dim("more steps than horizon blocks"));
    }
    let mut xs = vec![x0.clone()];
    let mut us = Vec::with_capacity(steps);
    for i in 0..steps {
        let u = PceVector::new(k * xs[i].coeffs());
        let wk = w.placed(basis, basis.horizon_tags()[i])?;
        xs.push(PceVector::new(a * xs[i].coeffs() + b * u.coeffs() + wk.coeffs()));
        us.push(u);
    }
    Ok((xs, us))
}
