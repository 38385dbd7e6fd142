//! Terminal ingredients: feedback `K`, data multiplier `H`, cost `P`,
//! covariance bound `Γ` and the ellipsoidal terminal set level `γ`.

mod model;
mod synth;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataRecord;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sets::BoxSet;

pub use model::{dare, dare_residual, lqr_gain};
pub use synth::{solve_gamma, solve_p, synthesize_k_h, FeedbackSynthesis};

/// Terminal set `{x : ½ xᵀ P x ≤ level}` and the data needed to shift
/// solutions through it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalIngredients {
    #[serde(rename = "K", with = "crate::serde_util::matrix")]
    pub k: DMatrix<f64>,
    /// Empty (zero columns) for model-based ingredients.
    #[serde(rename = "H", with = "crate::serde_util::matrix")]
    pub h: DMatrix<f64>,
    #[serde(rename = "P", with = "crate::serde_util::matrix")]
    pub p: DMatrix<f64>,
    #[serde(rename = "Gamma", with = "crate::serde_util::matrix")]
    pub gamma: DMatrix<f64>,
    pub gamma_level: f64,
    /// `X⁺ − W`; empty for model-based ingredients.
    #[serde(rename = "M", with = "crate::serde_util::matrix")]
    pub m: DMatrix<f64>,
    /// Closed-loop matrix `MH` (or `A + BK`).
    #[serde(rename = "MH", with = "crate::serde_util::matrix")]
    pub mh: DMatrix<f64>,
    #[serde(rename = "Sigma_bar", with = "crate::serde_util::matrix")]
    pub sigma_bar: DMatrix<f64>,
}

/// Chance-constraint data the terminal set must be compatible with.
#[derive(Clone, Debug, PartialEq)]
pub struct ChanceBoxes {
    pub x_box: BoxSet,
    pub u_box: BoxSet,
    pub sigma_x: f64,
    pub sigma_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `1 − λ_max` of the closed-loop map measured in the `P` norm.
    pub invariance_margin: f64,
    /// Distance to the nearer bound per enabled state coordinate.
    pub state_margins: Vec<f64>,
    pub input_margins: Vec<f64>,
    pub pass: bool,
}

const MAX_HALVINGS: usize = 60;

impl TerminalIngredients {
    pub fn nx(&self) -> usize {
        self.p.nrows()
    }

    pub fn nu(&self) -> usize {
        self.k.nrows()
    }

    /// Ingredients from data: LMI synthesis of `K, H`, then the Lyapunov
    /// equations for `P` and `Γ`. The level starts at 1.
    pub fn from_data(
        record: &DataRecord,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        sigma_bar: &DMatrix<f64>,
    ) -> Result<Self> {
        let FeedbackSynthesis { k, h, m } = synthesize_k_h(record, q, r)?;
        let mh = &m * &h;
        let p = solve_p(&k, &mh, q, r)?;
        let gamma = solve_gamma(&mh, sigma_bar)?;
        Ok(Self {
            k,
            h,
            p,
            gamma,
            gamma_level: 1.0,
            m,
            mh,
            sigma_bar: sigma_bar.clone(),
        })
    }

    /// Model-based ingredients from the Riccati equation.
    pub fn model_based(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        sigma_bar: &DMatrix<f64>,
    ) -> Result<Self> {
        let p = dare(a, b, q, r)?;
        let k = lqr_gain(a, b, r, &p)?;
        let mh = a + b * &k;
        let gamma = solve_gamma(&mh, sigma_bar)?;
        let nx = a.nrows();
        Ok(Self {
            k,
            h: DMatrix::zeros(0, 0),
            p,
            gamma,
            gamma_level: 1.0,
            m: DMatrix::zeros(nx, 0),
            mh,
            sigma_bar: sigma_bar.clone(),
        })
    }

    pub fn with_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::arg(format!("terminal level must be positive, got {level}")));
        }
        self.gamma_level = level;
        Ok(self)
    }

    /// Halves the level from 1 until the terminal assumption holds.
    pub fn with_auto_level(mut self, chance: &ChanceBoxes) -> Result<Self> {
        let mut level = 1.0;
        for _ in 0..=MAX_HALVINGS {
            self.gamma_level = level;
            let rep = self.check(chance);
            if rep.pass {
                return Ok(self);
            }
            if rep.invariance_margin < -1e-9 {
                return Err(Error::Synthesis("terminal set is not invariant".into()));
            }
            level *= 0.5;
        }
        Err(Error::Synthesis(format!(
            "no terminal level passed after {MAX_HALVINGS} halvings"
        )))
    }

    /// Residual of `[X; U] H = [I; K]`.
    pub fn ik_residual(&self, record: &DataRecord) -> f64 {
        let d = linalg::vstack(&[&record.x_minus(), &record.u]);
        let id_k = linalg::vstack(&[&DMatrix::identity(self.nx(), self.nx()), &self.k]);
        linalg::max_abs(&(d * &self.h - id_k))
    }

    pub fn p_residual(&self, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
        let res = &self.p
            - self.mh.transpose() * &self.p * &self.mh
            - self.k.transpose() * r * &self.k
            - q;
        linalg::max_abs(&res)
    }

    pub fn gamma_residual(&self) -> f64 {
        let res = &self.mh * &self.gamma * self.mh.transpose() - &self.gamma + &self.sigma_bar;
        linalg::max_abs(&res)
    }

    /// Checks invariance of the terminal ellipsoid and that every mean in it,
    /// with covariance up to `Γ`, meets the per-coordinate chance tightening.
    /// Covariances are compared through their diagonal entries.
    pub fn check(&self, chance: &ChanceBoxes) -> AssumptionReport {
        let nx = self.nx();
        let p_inv = self
            .p
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(nx, nx, f64::INFINITY));
        let p_half_inv = linalg::psd_sqrt(&p_inv);
        let contraction = &p_half_inv * self.mh.transpose() * &self.p * &self.mh * &p_half_inv;
        let rho = if linalg::spectral_radius(&self.mh) < 1.0 {
            linalg::lambda_max(&contraction)
        } else {
            f64::INFINITY
        };
        let invariance_margin = 1.0 - rho;
        let level = self.gamma_level;
        let margins = |bx: &BoxSet, sel: &DMatrix<f64>, sigma: f64| -> Vec<f64> {
            let shape = sel * &p_inv * sel.transpose();
            let cov = sel * &self.gamma * sel.transpose();
            bx.active()
                .map(|(i, lo, hi)| {
                    let reach = (2.0 * level * shape[(i, i)].max(0.0)).sqrt()
                        + sigma * cov[(i, i)].max(0.0).sqrt();
                    hi.min(-lo) - reach
                })
                .collect()
        };
        let state_margins = margins(&chance.x_box, &DMatrix::identity(nx, nx), chance.sigma_x);
        let input_margins = margins(&chance.u_box, &self.k, chance.sigma_u);
        let pass = invariance_margin >= -1e-9
            && state_margins.iter().chain(&input_margins).all(|&m| m >= 0.0);
        AssumptionReport {
            invariance_margin,
            state_margins,
            input_margins,
            pass,
        }
    }
}
