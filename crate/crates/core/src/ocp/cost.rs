use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{CovarianceMode, OcpProblem, Representation};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pce::{PceBasis, PceVector};

/// `½ xᵀQx + ½ uᵀRu`.
pub fn stage_cost(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    0.5 * (x.dot(&(q * x)) + u.dot(&(r * u)))
}

/// `½ Σ_j n_j zʲᵀ W zʲ`.
pub(crate) fn weighted(z: &PceVector, w: &DMatrix<f64>, norms: &[f64]) -> f64 {
    let c = z.coeffs();
    (0..c.ncols())
        .map(|j| {
            let col = c.column(j);
            0.5 * norms[j] * col.dot(&(w * col))
        })
        .sum()
}

/// Expected cost of a PCE trajectory: stage costs over `0..N` plus the
/// terminal cost at `N`.
pub fn evaluate_cost(
    x: &[PceVector],
    u: &[PceVector],
    basis: &PceBasis,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let n = u.len();
    if x.len() != n + 1 {
        return Err(Error::dim(format!("{} states for {} inputs", x.len(), n)));
    }
    let norms = basis.norms();
    if x.iter().chain(u).any(|z| z.len() != norms.len()) {
        return Err(Error::dim("trajectory length differs from basis"));
    }
    let stages: f64 = (0..n)
        .map(|i| weighted(&x[i], q, norms) + weighted(&u[i], r, norms))
        .sum();
    Ok(stages + weighted(&x[n], p, norms))
}

/// Largest violation of each constraint group for a candidate trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ConstraintResiduals {
    pub initial: f64,
    pub dynamics: f64,
    pub chance: f64,
    pub terminal_mean: f64,
    pub terminal_covariance: f64,
    pub causality: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        [
            self.initial,
            self.dynamics,
            self.chance,
            self.terminal_mean,
            self.terminal_covariance,
            self.causality,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl OcpProblem<'_> {
    /// Residuals of a trajectory against this problem without slack.
    pub fn residuals(&self, x: &[PceVector], u: &[PceVector]) -> Result<ConstraintResiduals> {
        let (nx, nu, n, l) = (self.nx(), self.nu(), self.config.horizon, self.basis.len());
        if x.len() != n + 1
            || u.len() != n
            || x.iter().any(|z| z.coeffs().shape() != (nx, l))
            || u.iter().any(|z| z.coeffs().shape() != (nu, l))
        {
            return Err(Error::dim("trajectory shape does not match problem"));
        }
        let cfg = self.config;
        let norms = self.basis.norms();
        let dist = self.disturbance_blocks()?;
        let mut res = ConstraintResiduals {
            initial: linalg::max_abs(&(x[0].coeffs() - self.init.coeffs())),
            ..Default::default()
        };

        res.dynamics = match self.repr {
            Representation::Model(m) => (0..n)
                .map(|i| {
                    let pred = &m.a * x[i].coeffs() + &m.b * u[i].coeffs() + dist[i].coeffs();
                    linalg::max_abs(&(x[i + 1].coeffs() - pred))
                })
                .fold(0.0, f64::max),
            Representation::Hankel(p) | Representation::Predictor(p) => {
                let mut stacked = DMatrix::zeros(nx + n * nu + n * nx, l);
                stacked.rows_mut(0, nx).copy_from(x[0].coeffs());
                for i in 0..n {
                    let v = u[i].coeffs() - &p.gain * x[i].coeffs();
                    stacked.rows_mut(nx + i * nu, nu).copy_from(&v);
                    stacked
                        .rows_mut(nx + n * nu + i * nx, nx)
                        .copy_from(dist[i].coeffs());
                }
                let pred = &p.phi * stacked;
                (1..=n)
                    .map(|i| linalg::max_abs(&(x[i].coeffs() - pred.rows(i * nx, nx))))
                    .fold(0.0, f64::max)
            }
        };

        let spread = |z: &PceVector, r: usize| {
            let c = z.coeffs();
            (1..l).map(|j| norms[j] * c[(r, j)] * c[(r, j)]).sum::<f64>().sqrt()
        };
        let mut chance = 0.0f64;
        for i in 0..n {
            for (r, lo, hi) in cfg.x_box.active() {
                let (m, s) = (x[i].coeffs()[(r, 0)], cfg.sigma_x * spread(&x[i], r));
                chance = chance.max(m + s - hi).max(lo - (m - s));
            }
            for (r, lo, hi) in cfg.u_box.active() {
                let (m, s) = (u[i].coeffs()[(r, 0)], cfg.sigma_u * spread(&u[i], r));
                chance = chance.max(m + s - hi).max(lo - (m - s));
            }
        }
        res.chance = chance;

        for (i, (xi, ui)) in x.iter().zip(u).enumerate() {
            for j in 0..l {
                if !self.input_is_free(j, i) {
                    res.causality = res.causality.max(ui.coeffs().column(j).amax());
                }
                if !self.state_is_free(j, i) {
                    res.causality = res.causality.max(xi.coeffs().column(j).amax());
                }
            }
        }

        if cfg.terminal_constraints {
            let xn = x[n].coeffs();
            let mean = xn.column(0);
            res.terminal_mean =
                (0.5 * mean.dot(&(&self.terminal.p * mean)) - self.terminal.gamma_level).max(0.0);
            let mut cov = DMatrix::zeros(nx, nx);
            for j in 1..l {
                let col = xn.column(j);
                cov += norms[j] * col * col.transpose();
            }
            let diff = cov - &self.terminal.gamma;
            res.terminal_covariance = if nx == 1 || cfg.covariance_mode == CovarianceMode::Diagonal {
                diff.diagonal().max().max(0.0)
            } else {
                linalg::lambda_max(&diff).max(0.0)
            };
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stage_cost_is_half_quadratic() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let r = DMatrix::from_element(1, 1, 4.0);
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let u = DVector::from_vec(vec![0.5]);
        assert_relative_eq!(stage_cost(&x, &u, &q, &r), 0.5 * (2.0 - 2.0 + 3.0) + 0.5);
    }
}
