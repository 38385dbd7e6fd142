use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::{GermTerm, PceBasis, Tag};
use super::poly::PolyFamily;
use super::vector::PceVector;
use crate::error::{Error, Result};
use crate::linalg;

/// Distribution of the i.i.d. additive disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian {
        #[serde(with = "crate::serde_util::matrix")]
        covariance: DMatrix<f64>,
    },
    Uniform {
        half_widths: Vec<f64>,
    },
}

/// Exact two-term PCE of the disturbance: one degree-one polynomial per
/// coordinate of the germ, with a zero mean column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Distribution", into = "Distribution")]
pub struct DisturbanceModel {
    distribution: Distribution,
    coeffs: DMatrix<f64>,
    template: Vec<GermTerm>,
    diagonal: bool,
}

impl TryFrom<Distribution> for DisturbanceModel {
    type Error = Error;

    fn try_from(d: Distribution) -> Result<Self> {
        match d {
            Distribution::Gaussian { covariance } => Self::gaussian(covariance),
            Distribution::Uniform { half_widths } => Self::uniform(half_widths),
        }
    }
}

impl From<DisturbanceModel> for Distribution {
    fn from(m: DisturbanceModel) -> Self {
        m.distribution
    }
}

impl DisturbanceModel {
    /// Gaussian `N(0, covariance)`; coefficient columns form a square-root
    /// factor of the covariance (Cholesky when definite).
    pub fn gaussian(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        if n == 0 || covariance.ncols() != n {
            return Err(Error::arg("covariance must be square and non-empty"));
        }
        if linalg::max_abs(&(&covariance - covariance.transpose())) > 1e-12 {
            return Err(Error::arg("covariance must be symmetric"));
        }
        if linalg::lambda_min(&covariance) < -1e-12 {
            return Err(Error::arg("covariance must be positive semidefinite"));
        }
        let factor = match covariance.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let e = covariance.clone().symmetric_eigen();
                let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
                &e.eigenvectors * DMatrix::from_diagonal(&d)
            }
        };
        Ok(Self::from_factor(
            Distribution::Gaussian { covariance },
            factor,
            PolyFamily::Hermite,
        ))
    }

    pub fn gaussian_diag(std_devs: &[f64]) -> Result<Self> {
        let v: Vec<f64> = std_devs.iter().map(|s| s * s).collect();
        Self::gaussian(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }

    /// Independent `U(-a_i, a_i)` per coordinate.
    pub fn uniform(half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.is_empty() || half_widths.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::arg("half widths must be finite and non-negative"));
        }
        let factor = DMatrix::from_diagonal(&DVector::from_column_slice(&half_widths));
        Ok(Self::from_factor(
            Distribution::Uniform { half_widths },
            factor,
            PolyFamily::Legendre,
        ))
    }

    fn from_factor(distribution: Distribution, factor: DMatrix<f64>, family: PolyFamily) -> Self {
        let n = factor.nrows();
        let mut coeffs = DMatrix::zeros(n, n + 1);
        coeffs.view_mut((0, 1), (n, n)).copy_from(&factor);
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || factor[(i, j)] == 0.0));
        Self {
            distribution,
            coeffs,
            template: (0..n).map(|g| GermTerm::linear(family, g)).collect(),
            diagonal,
        }
    }

    pub fn distribution(&self) -> &Distribution {
        &self.distribution
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.distribution, Distribution::Gaussian { .. })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Size of the disturbance PCE including the constant.
    pub fn lw(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `dim x L_w` coefficients; column 0 is zero.
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Non-constant coefficient columns.
    pub fn factor(&self) -> DMatrix<f64> {
        self.coeffs.columns(1, self.lw() - 1).into_owned()
    }

    pub fn template(&self) -> &[GermTerm] {
        &self.template
    }

    /// Covariance of the distribution itself.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.distribution {
            Distribution::Gaussian { covariance } => covariance.clone(),
            Distribution::Uniform { half_widths } => DMatrix::from_diagonal(
                &DVector::from_iterator(half_widths.len(), half_widths.iter().map(|a| a * a / 3.0)),
            ),
        }
    }

    /// Covariance reconstructed from the PCE coefficients.
    pub fn pce_covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut cov = DMatrix::zeros(n, n);
        for (j, t) in self.template.iter().enumerate() {
            let c = self.coeffs.column(j + 1);
            cov += t.family.norm(t.degree) * c * c.transpose();
        }
        cov
    }

    /// Disturbance coefficients placed in the block of `tag` within `basis`.
    pub fn placed(&self, basis: &PceBasis, tag: Tag) -> Result<PceVector> {
        let range = basis
            .tag_range(tag)
            .ok_or_else(|| Error::arg(format!("basis has no block tagged {tag}")))?;
        if range.len() != self.lw() - 1 {
            return Err(Error::dim(format!(
                "block of tag {tag} has {} functions, disturbance needs {}",
                range.len(),
                self.lw() - 1
            )));
        }
        let mut c = DMatrix::zeros(self.dim(), basis.len());
        c.columns_mut(range.start, range.len())
            .copy_from(&self.coeffs.columns(1, self.lw() - 1));
        Ok(PceVector::new(c))
    }

    pub fn sample_germs<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.template
            .iter()
            .map(|t| t.family.sample_germ(rng))
            .collect()
    }

    /// `sum_j w^j phi^j(xi)` for a germ realisation.
    pub fn realize(&self, germs: &[f64]) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim());
        for (j, t) in self.template.iter().enumerate() {
            w += self.coeffs.column(j + 1) * t.family.eval(t.degree, germs[t.germ]);
        }
        w
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let g = self.sample_germs(rng);
        self.realize(&g)
    }

    /// Germ values reproducing a disturbance realisation by least squares.
    ///
    /// Coordinates with a vanishing coefficient get germ 0 and a warning.
    pub fn fit_germs(&self, w: &DVector<f64>) -> Result<Vec<f64>> {
        if w.len() != self.dim() {
            return Err(Error::dim(format!(
                "disturbance of length {} for model of dimension {}",
                w.len(),
                self.dim()
            )));
        }
        let f = self.factor();
        if self.diagonal {
            return Ok((0..self.dim())
                .map(|i| {
                    let d = f[(i, i)];
                    if d.abs() > 1e-12 {
                        w[i] / d
                    } else {
                        if w[i] != 0.0 {
                            log::warn!("germ {i} unidentifiable (coefficient {d:e}); set to 0");
                        }
                        0.0
                    }
                })
                .collect());
        }
        let g = linalg::pinv(&f, linalg::RANK_RTOL) * w;
        let resid = (&f * &g - w).norm();
        if resid > 1e-9 * (1.0 + w.norm()) {
            log::warn!("germ fit leaves residual {resid:e}");
        }
        Ok(g.iter().copied().collect())
    }
}
