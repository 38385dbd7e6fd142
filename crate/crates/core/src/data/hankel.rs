use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};

use super::record::DataRecord;

/// Block-Hankel matrix of depth `depth` from a signal whose columns are time
/// steps: column `j` stacks samples `j, …, j + depth − 1`.
pub fn hankel(signal: &DMatrix<f64>, depth: usize) -> Result<DMatrix<f64>> {
    let (n, t) = signal.shape();
    if depth == 0 || t < depth {
        return Err(Error::arg(format!(
            "Hankel depth {depth} needs at least that many samples, have {t}"
        )));
    }
    let cols = t - depth + 1;
    let mut h = DMatrix::zeros(depth * n, cols);
    for j in 0..cols {
        for i in 0..depth {
            h.view_mut((i * n, j), (n, 1)).copy_from(&signal.column(i + j));
        }
    }
    Ok(h)
}

/// Full row rank of the depth-`order` Hankel of `signal`.
pub fn is_persistently_exciting(signal: &DMatrix<f64>, order: usize, tol: f64) -> bool {
    if order == 0 {
        return false;
    }
    let Ok(h) = hankel(signal, order) else {
        return false;
    };
    if h.nrows() > h.ncols() {
        return false;
    }
    linalg::rank(&h, tol) == h.nrows()
}

/// Aligned Hankel matrices of states (depth `N + 1`), inputs and disturbances
/// (depth `N`), sharing `T − N + 1` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelStack {
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
    pub hw: DMatrix<f64>,
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
}

/// Stacked `(u, w)` signal used for the excitation check.
pub fn input_disturbance_signal(u: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::vstack(&[u, w])
}

impl HankelStack {
    pub fn build(record: &DataRecord, horizon: usize) -> Result<Self> {
        let (nx, nu) = (record.nx(), record.nu());
        if horizon == 0 {
            return Err(Error::arg("horizon must be positive"));
        }
        let order = horizon + nx + 1;
        let uw = input_disturbance_signal(&record.u, &record.w);
        if !is_persistently_exciting(&uw, order, RANK_RTOL) {
            return Err(Error::InsufficientExcitation(format!(
                "(u, w) of length {} not persistently exciting of order {order}",
                record.len()
            )));
        }
        Ok(Self {
            hx: hankel(&record.x, horizon + 1)?,
            hu: hankel(&record.u, horizon)?,
            hw: hankel(&record.w, horizon)?,
            horizon,
            nx,
            nu,
        })
    }

    pub fn cols(&self) -> usize {
        self.hx.ncols()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.hx, &self.hu, &self.hw])
    }

    /// Rows determining a trajectory: initial state, inputs and disturbances.
    pub fn free_rows(&self) -> DMatrix<f64> {
        let hx0 = self.hx.rows(0, self.nx).into_owned();
        linalg::vstack(&[&hx0, &self.hu, &self.hw])
    }

    /// Data-driven predictor `Φ` with `x_[0,N] = Φ [x_0; u; w]` for every
    /// trajectory in the column space of the stack.
    pub fn predictor(&self) -> DMatrix<f64> {
        &self.hx * linalg::pinv(&self.free_rows(), RANK_RTOL)
    }

    /// Relative least-squares residual of `[x; u; w]` against the column space
    /// of the stack. Signals are column-per-step, with `N + 1` states and `N`
    /// inputs and disturbances.
    pub fn membership_residual(
        &self,
        x: &DMatrix<f64>,
        u: &DMatrix<f64>,
        w: &DMatrix<f64>,
    ) -> Result<f64> {
        let n = self.horizon;
        if x.shape() != (self.nx, n + 1) || u.shape() != (self.nu, n) || w.shape() != (self.nx, n)
        {
            return Err(Error::dim("trajectory does not match the stack horizon"));
        }
        let v = DVector::from_iterator(
            x.len() + u.len() + w.len(),
            x.iter().chain(u.iter()).chain(w.iter()).copied(),
        );
        let h = self.stacked();
        let g = linalg::pinv(&h, RANK_RTOL) * &v;
        Ok((&h * g - &v).norm() / v.norm().max(1.0))
    }
}
