use nalgebra::DMatrix;

use crate::conic::{Affine, ConicBuilder, ConicStatus, SolverOptions};
use crate::data::DataRecord;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};

/// Feedback and data multiplier from the data-driven LMI synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackSynthesis {
    pub k: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// `M = X⁺ − W`.
    pub m: DMatrix<f64>,
}

/// Solves the data-driven LQR semidefinite program.
///
/// The decision `X₂` enters only through `Z = [X; U] X₂`, so the program is
/// posed over `Z` with `M X₂ = M D⁺ Z`; the component of `X₂` in the kernel of
/// `D = [X; U]` is annihilated by `M`.
pub fn synthesize_k_h(
    record: &DataRecord,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<FeedbackSynthesis> {
    let (nx, nu) = (record.nx(), record.nu());
    if q.shape() != (nx, nx) || r.shape() != (nu, nu) {
        return Err(Error::dim("weights do not match record dimensions"));
    }
    if linalg::lambda_min(r) <= 0.0 {
        return Err(Error::arg("R must be positive definite"));
    }
    let d = linalg::vstack(&[&record.x_minus(), &record.u]);
    if linalg::rank(&d, RANK_RTOL) < nx + nu {
        return Err(Error::InsufficientExcitation(
            "stacked [X; U] data matrix is rank deficient".into(),
        ));
    }
    let dp = linalg::pinv(&d, RANK_RTOL);
    let m = record.x_plus() - &record.w;
    let theta = &m * &dp;
    let r_half = linalg::psd_sqrt(r);

    let mut b = ConicBuilder::new();
    // Symmetric Z_x stored by its upper triangle, Z_u dense, symmetric X₁.
    let zx0 = b.add_vars(nx * (nx + 1) / 2);
    let zu0 = b.add_vars(nu * nx);
    let x10 = b.add_vars(nu * (nu + 1) / 2);
    let sym = |base: usize, i: usize, j: usize| {
        let (a, c) = if i <= j { (i, j) } else { (j, i) };
        base + c * (c + 1) / 2 + a
    };
    let zx = |i: usize, j: usize| sym(zx0, i, j);
    let zu = |i: usize, j: usize| zu0 + j * nu + i;
    let x1 = |i: usize, j: usize| sym(x10, i, j);
    // (row i of [Z_x; Z_u]) as an affine expression in column j.
    let z_entry = |row: usize, j: usize| {
        if row < nx {
            Affine::var(zx(row, j))
        } else {
            Affine::var(zu(row - nx, j))
        }
    };

    for i in 0..nx {
        for j in 0..nx {
            b.add_linear(zx(i, j), q[(j, i)]);
        }
    }
    for i in 0..nu {
        b.add_linear(x1(i, i), 1.0);
    }

    b.add_psd(2 * nx, |i, j| {
        match (i < nx, j < nx) {
            (true, true) => {
                let e = Affine::var(zx(i, j));
                if i == j {
                    e.plus(&Affine::constant(-1.0))
                } else {
                    e
                }
            }
            (true, false) => {
                let col = j - nx;
                let mut e = Affine::default();
                for s in 0..nx + nu {
                    for &(v, c) in &z_entry(s, col).terms {
                        e.add(v, theta[(i, s)] * c);
                    }
                }
                e
            }
            _ => Affine::var(zx(i - nx, j - nx)),
        }
    });

    b.add_psd(nu + nx, |i, j| match (i < nu, j < nu) {
        (true, true) => Affine::var(x1(i, j)),
        (true, false) => {
            let col = j - nu;
            let mut e = Affine::default();
            for s in 0..nu {
                e.add(zu(s, col), r_half[(i, s)]);
            }
            e
        }
        _ => Affine::var(zx(i - nu, j - nu)),
    });

    let sol = b.solve(&SolverOptions {
        tol: 1e-9,
        max_iter: 200,
    })?;
    match sol.status {
        ConicStatus::Optimal => {}
        s => return Err(Error::Synthesis(format!("LMI program ended with status {s:?}"))),
    }
    let zx_m = DMatrix::from_fn(nx, nx, |i, j| sol.x[zx(i, j)]);
    let zu_m = DMatrix::from_fn(nu, nx, |i, j| sol.x[zu(i, j)]);
    let zx_inv = zx_m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("X X₂ is singular".into()))?;
    let k = &zu_m * zx_inv;
    let id_k = linalg::vstack(&[&DMatrix::identity(nx, nx), &k]);
    let h = &dp * id_k;
    Ok(FeedbackSynthesis { k, h, m })
}

/// `P = (MH)ᵀ P (MH) + Q + Kᵀ R K`.
pub fn solve_p(
    k: &DMatrix<f64>,
    mh: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let c = q + k.transpose() * r * k;
    linalg::stein(&mh.transpose(), &c)
}

/// `Γ = (MH) Γ (MH)ᵀ + Σ̄`.
pub fn solve_gamma(mh: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::stein(mh, sigma_bar)
}
