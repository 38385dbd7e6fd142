use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::PceBasis;
use crate::error::{Error, Result};

/// PCE coefficients of a vector-valued random variable; column `j` multiplies
/// basis function `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PceVector {
    #[serde(with = "crate::serde_util::matrix")]
    coeffs: DMatrix<f64>,
}

/// Mean and covariance of a PCE-represented random vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PceVector {
    pub fn new(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        Self::new(DMatrix::zeros(dim, len))
    }

    /// Deterministic vector: only the constant coefficient is non-zero.
    pub fn deterministic(mean: &DVector<f64>, len: usize) -> Self {
        let mut c = DMatrix::zeros(mean.len(), len);
        c.set_column(0, mean);
        Self::new(c)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.ncols() == 0
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coeffs
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn mean(&self) -> DVector<f64> {
        self.coeffs.column(0).into_owned()
    }

    /// Copy extended with zero columns up to `len`.
    pub fn padded(&self, len: usize) -> Self {
        assert!(len >= self.len(), "cannot pad to a shorter basis");
        let mut c = DMatrix::zeros(self.dim(), len);
        c.view_mut((0, 0), self.coeffs.shape()).copy_from(&self.coeffs);
        Self::new(c)
    }

    /// Realisation `sum_j z^j phi^j(xi)` given evaluated basis functions.
    pub fn realize(&self, phi: &[f64]) -> Result<DVector<f64>> {
        if phi.len() < self.len() {
            return Err(Error::dim(format!(
                "{} basis values for {} coefficients",
                phi.len(),
                self.len()
            )));
        }
        Ok(&self.coeffs * DVector::from_column_slice(&phi[..self.len()]))
    }

    pub fn moments(&self, basis: &PceBasis) -> Result<Moments> {
        moments(self, basis)
    }
}

pub fn moments(z: &PceVector, basis: &PceBasis) -> Result<Moments> {
    if z.len() != basis.len() {
        return Err(Error::arg(format!(
            "coefficient block has {} columns, basis has {}",
            z.len(),
            basis.len()
        )));
    }
    let n = z.dim();
    let mut cov = DMatrix::zeros(n, n);
    for (j, &nj) in basis.norms().iter().enumerate().skip(1) {
        let c = z.coeffs.column(j);
        cov += nj * c * c.transpose();
    }
    Ok(Moments {
        mean: z.mean(),
        covariance: cov,
    })
}
