//! The PCE optimal control problem over a data-driven (or model-based)
//! system representation.

mod assemble;
mod cost;
mod sigma;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conic::SolverOptions;
use crate::data::HankelStack;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::pce::{DisturbanceModel, PceBasis, PceVector};
use crate::sets::BoxSet;
use crate::terminal::TerminalIngredients;

pub use assemble::VariableCounts;
pub use cost::{evaluate_cost, stage_cost, ConstraintResiduals};
pub(crate) use cost::weighted;
pub use sigma::{chance_sigma, SigmaMode};

/// Default weight of the one-norm slack penalty.
pub const DEFAULT_BETA: f64 = 1e4;

/// Ordering used for the terminal covariance bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// `Cov ⪯ Γ` in the semidefinite order.
    #[default]
    Semidefinite,
    /// Only the variances `Cov_ii ≤ Γ_ii`.
    Diagonal,
}

/// Scenario-level OCP settings shared by every solve of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpConfig {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x_box: BoxSet,
    pub u_box: BoxSet,
    pub sigma_x: f64,
    pub sigma_u: f64,
    pub beta: f64,
    pub covariance_mode: CovarianceMode,
    /// Terminal mean and covariance constraints.
    pub terminal_constraints: bool,
    pub solver: SolverOptions,
}

impl OcpConfig {
    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::arg("horizon must be positive"));
        }
        if self.q.shape() != (nx, nx)
            || self.r.shape() != (nu, nu)
            || self.x_box.dim() != nx
            || self.u_box.dim() != nu
        {
            return Err(Error::dim("weights or boxes do not match system dimensions"));
        }
        if !(self.sigma_x > 0.0 && self.sigma_u > 0.0) {
            return Err(Error::arg("chance scalings must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::arg("slack penalty must be positive"));
        }
        Ok(())
    }
}

/// Predictor derived from a Hankel stack in prestabilised coordinates
/// `v = u − K x`: `x_[0,N] = Φ [x_0; v; w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackPredictor {
    pub stack: HankelStack,
    pub gain: DMatrix<f64>,
    /// Hankel matrix of `v = u − K x`, aligned with `stack.hu`.
    pub hv: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    /// Pseudo-inverse of the rows fixing a trajectory, for recovering `g`.
    pub free_pinv: DMatrix<f64>,
}

impl StackPredictor {
    pub fn new(stack: HankelStack, gain: DMatrix<f64>) -> Result<Self> {
        let (nx, nu, n) = (stack.nx, stack.nu, stack.horizon);
        if gain.shape() != (nu, nx) {
            return Err(Error::dim("prestabilising gain must be n_u × n_x"));
        }
        let mut hv = stack.hu.clone();
        for i in 0..n {
            let kx = &gain * stack.hx.rows(i * nx, nx);
            let mut rows = hv.rows_mut(i * nu, nu);
            rows -= kx;
        }
        let hx0 = stack.hx.rows(0, nx).into_owned();
        let free = linalg::vstack(&[&hx0, &hv, &stack.hw]);
        let free_pinv = linalg::pinv(&free, RANK_RTOL);
        let phi = &stack.hx * &free_pinv;
        Ok(Self {
            stack,
            gain,
            hv,
            phi,
            free_pinv,
        })
    }

    pub fn horizon(&self) -> usize {
        self.stack.horizon
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// How predicted coefficients are tied to the initial condition and inputs.
#[derive(Clone, Debug)]
pub enum Representation {
    /// Literal Hankel equalities with one `g` vector per basis function.
    Hankel(Arc<StackPredictor>),
    /// The equivalent data-driven predictor `Φ`.
    Predictor(Arc<StackPredictor>),
    /// Galerkin dynamics of a known (or identified) model.
    Model(Arc<LinearModel>),
}

impl Representation {
    /// Hankel form; `gain` prestabilises the predicted inputs (zero for none).
    pub fn hankel(stack: HankelStack, gain: DMatrix<f64>) -> Result<Self> {
        Ok(Representation::Hankel(Arc::new(StackPredictor::new(stack, gain)?)))
    }

    pub fn predictor(stack: HankelStack, gain: DMatrix<f64>) -> Result<Self> {
        Ok(Representation::Predictor(Arc::new(StackPredictor::new(stack, gain)?)))
    }

    pub fn model(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Representation::Model(Arc::new(LinearModel { a, b }))
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Representation::Hankel(p) | Representation::Predictor(p) => (p.stack.nx, p.stack.nu),
            Representation::Model(m) => (m.a.nrows(), m.b.ncols()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// One instance of the OCP: a basis, an initial condition and the shared
/// ingredients.
#[derive(Clone, Debug)]
pub struct OcpProblem<'a> {
    pub config: &'a OcpConfig,
    pub repr: &'a Representation,
    pub terminal: &'a TerminalIngredients,
    pub disturbance: &'a DisturbanceModel,
    pub basis: PceBasis,
    pub init: PceVector,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    pub status: OcpStatus,
    /// States at steps `0..=N`, each `n_x × L`.
    pub x: Vec<PceVector>,
    /// Inputs at steps `0..N`, each `n_u × L`.
    pub u: Vec<PceVector>,
    /// Hankel multipliers `(T − N + 1) × L`, when solved in Hankel form.
    pub g: Option<DMatrix<f64>>,
    /// Initial-condition slack `n_x × L`.
    pub slack: DMatrix<f64>,
    /// Objective without the slack penalty.
    pub value: f64,
    /// Objective including the slack penalty.
    pub value_with_slack: f64,
    pub iterations: u32,
}

impl OcpSolution {
    pub fn slack_norm(&self) -> f64 {
        linalg::max_abs(&self.slack)
    }

    pub(crate) fn rejected(status: OcpStatus, nx: usize, l: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            u: Vec::new(),
            g: None,
            slack: DMatrix::zeros(nx, l),
            value: f64::INFINITY,
            value_with_slack: f64::INFINITY,
            iterations: 0,
        }
    }
}

impl<'a> OcpProblem<'a> {
    pub fn new(
        config: &'a OcpConfig,
        repr: &'a Representation,
        terminal: &'a TerminalIngredients,
        disturbance: &'a DisturbanceModel,
        basis: PceBasis,
        init: PceVector,
    ) -> Result<Self> {
        let (nx, nu) = repr.dims();
        config.validate(nx, nu)?;
        if basis.horizon() != config.horizon {
            return Err(Error::dim(format!(
                "basis horizon {} but config horizon {}",
                basis.horizon(),
                config.horizon
            )));
        }
        if let Representation::Hankel(p) | Representation::Predictor(p) = repr {
            if p.horizon() != config.horizon {
                return Err(Error::dim("stack horizon differs from config horizon"));
            }
        }
        if init.dim() != nx || init.len() != basis.len() {
            return Err(Error::dim(format!(
                "initial condition {:?} for basis of length {}",
                init.coeffs().shape(),
                basis.len()
            )));
        }
        let lx = basis.lx();
        if init.coeffs().columns(lx, basis.len() - lx).iter().any(|&c| c != 0.0) {
            return Err(Error::arg(
                "initial condition has coefficients on disturbances not yet realised",
            ));
        }
        if disturbance.dim() != nx || disturbance.lw() != basis.lw() {
            return Err(Error::dim("disturbance model does not match basis blocks"));
        }
        if terminal.nx() != nx || terminal.nu() != nu {
            return Err(Error::dim("terminal ingredients do not match system"));
        }
        Ok(Self {
            config,
            repr,
            terminal,
            disturbance,
            basis,
            init,
        })
    }

    pub fn nx(&self) -> usize {
        self.repr.dims().0
    }

    pub fn nu(&self) -> usize {
        self.repr.dims().1
    }

    /// Disturbance coefficients per horizon step, `n_x × L` each.
    pub fn disturbance_blocks(&self) -> Result<Vec<PceVector>> {
        self.basis
            .horizon_tags()
            .iter()
            .map(|&t| self.disturbance.placed(&self.basis, t))
            .collect()
    }
}

#[cfg(test)]
mod tests;
