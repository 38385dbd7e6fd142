use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};

use super::record::{DataRecord, DisturbanceFlag};

fn data_matrix(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = u.ncols();
    if x.ncols() != t + 1 {
        return Err(Error::dim(format!(
            "{} state samples for {t} inputs",
            x.ncols()
        )));
    }
    let xm = x.columns(0, t).into_owned();
    let d = linalg::vstack(&[&xm, u]);
    if linalg::rank(&d, RANK_RTOL) < d.nrows() {
        return Err(Error::InsufficientExcitation(
            "stacked [X; U] data matrix is rank deficient".into(),
        ));
    }
    Ok((d, x.columns(1, t).into_owned()))
}

/// Least-squares disturbance estimate `Ŵ = X⁺ (I − D⁺ D)` with `D = [X; U]`.
pub fn estimate_disturbances(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, xp) = data_matrix(x, u)?;
    let dp = linalg::pinv(&d, RANK_RTOL);
    Ok(&xp - &xp * &dp * &d)
}

/// Implicit model `[Â B̂] = X⁺ D⁺`.
pub fn identify_model(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (d, xp) = data_matrix(x, u)?;
    let theta = &xp * linalg::pinv(&d, RANK_RTOL);
    let nx = x.nrows();
    Ok((
        theta.columns(0, nx).into_owned(),
        theta.columns(nx, u.nrows()).into_owned(),
    ))
}

/// Copy of `record` whose disturbances are replaced by their estimate.
pub fn with_estimated_disturbances(record: &DataRecord) -> Result<DataRecord> {
    let w = estimate_disturbances(&record.x, &record.u)?;
    DataRecord::new(record.x.clone(), record.u.clone(), w, DisturbanceFlag::Estimated)
}

/// Online disturbance estimate: the offline data matrix extended by the single
/// most recent column, re-estimated, keeping the final entry.
#[derive(Clone, Debug)]
pub struct OnlineEstimator {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    nx: usize,
}

impl OnlineEstimator {
    pub fn new(record: &DataRecord) -> Result<Self> {
        let (d, xp) = data_matrix(&record.x, &record.u)?;
        Ok(Self {
            gram: &d * d.transpose(),
            cross: &xp * d.transpose(),
            nx: record.nx(),
        })
    }

    pub fn estimate(
        &self,
        x_prev: &DVector<f64>,
        u_prev: &DVector<f64>,
        x_now: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if x_prev.len() != self.nx || x_now.len() != self.nx || u_prev.len() + self.nx != self.gram.nrows()
        {
            return Err(Error::dim("online estimate sample dimensions"));
        }
        let d = DVector::from_iterator(
            self.gram.nrows(),
            x_prev.iter().chain(u_prev.iter()).copied(),
        );
        let gram = &self.gram + &d * d.transpose();
        let cross = &self.cross + x_now * d.transpose();
        // Θ = cross · gram⁻¹, computed as (gram⁻¹ crossᵀ)ᵀ.
        let theta_t = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("online Gram matrix not positive definite".into()))?
            .solve(&cross.transpose());
        Ok(x_now - theta_t.transpose() * d)
    }
}
