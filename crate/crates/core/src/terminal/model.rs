use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Stabilising solution of the discrete algebraic Riccati equation via the
/// structure-preserving doubling algorithm.
pub fn dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::dim("DARE operand shapes"));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::arg("R must be invertible"))?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    let mut hk = q.clone();
    for _ in 0..100 {
        let w = (&id + &gk * &hk)
            .try_inverse()
            .ok_or_else(|| Error::Synthesis("singular doubling step".into()))?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let delta = linalg::max_abs(&(&h_next - &hk)) / (1.0 + linalg::max_abs(&h_next));
        ak = a_next;
        gk = g_next;
        hk = linalg::symmetrize(&h_next);
        if delta < 1e-15 {
            return Ok(hk);
        }
    }
    Err(Error::Synthesis("Riccati doubling did not converge".into()))
}

/// `K = −(R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s = r + b.transpose() * p * b;
    let sol = s
        .lu()
        .solve(&(b.transpose() * p * a))
        .ok_or_else(|| Error::Numerical("singular R + BᵀPB".into()))?;
    Ok(-sol)
}

/// Residual of the Riccati equation at `p`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let s = r + b.transpose() * p * b;
    let bpa = b.transpose() * p * a;
    let s_inv = s.try_inverse().unwrap_or_else(|| DMatrix::from_element(1, 1, f64::NAN));
    let res = a.transpose() * p * a - p - bpa.transpose() * s_inv * bpa + q;
    linalg::max_abs(&res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_closed_form() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let a = DMatrix::from_element(1, 1, 2.0);
        let p = dare(&a, &one, &one, &one).unwrap();
        let exact = 2.0 + 5f64.sqrt();
        assert_relative_eq!(p[(0, 0)], exact, epsilon = 1e-12);
        let k = lqr_gain(&a, &one, &one, &p).unwrap();
        assert_relative_eq!(k[(0, 0)], -2.0 * exact / (1.0 + exact), epsilon = 1e-12);
        assert!(dare_residual(&a, &one, &one, &one, &p) < 1e-10);
    }

    #[test]
    fn zero_input_reduces_to_lyapunov() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let b = DMatrix::zeros(2, 1);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let p = dare(&a, &b, &q, &r).unwrap();
        let oracle = linalg::stein(&a.transpose(), &q).unwrap();
        assert_relative_eq!(p, oracle, epsilon = 1e-12);
        assert_eq!(lqr_gain(&a, &b, &r, &p).unwrap(), DMatrix::zeros(1, 2));
    }
}
