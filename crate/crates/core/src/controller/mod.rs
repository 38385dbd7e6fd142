//! The receding-horizon loop: measured or backup initial condition, shifted
//! candidates, closed-loop feedback from fitted germs.

mod feedback;
mod shift;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::data::OnlineEstimator;
use crate::error::{Error, Result};
use crate::ocp::{self, OcpConfig, OcpProblem, OcpSolution, OcpStatus, Representation};
use crate::pce::{DisturbanceModel, PceBasis, PceVector, Tag};
use crate::terminal::TerminalIngredients;

pub use feedback::realize_feedback;
pub use shift::{shift_candidate, Candidate};

/// Largest initial-condition slack for a solution to count as exact.
pub const SLACK_TOL: f64 = 1e-6;
/// Largest constraint residual for the shifted candidate to count as feasible.
pub const CANDIDATE_TOL: f64 = 1e-6;

/// Everything shared by the closed-loop runs of one scenario.
#[derive(Clone, Debug)]
pub struct ControllerSetup {
    pub config: OcpConfig,
    pub repr: Representation,
    pub terminal: TerminalIngredients,
    pub disturbance: DisturbanceModel,
    /// Used when past disturbances are not measured.
    pub estimator: Option<OnlineEstimator>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Measured,
    Backup,
}

impl Path {
    pub fn as_str(self) -> &'static str {
        match self {
            Path::Measured => "measured",
            Path::Backup => "backup",
        }
    }
}

/// Per-step record of the selection logic.
#[derive(Clone, Debug, Serialize)]
pub struct StepDiagnostics {
    pub k: usize,
    pub path: Path,
    /// The shifted candidate itself was applied because the backup solve
    /// failed or did not improve on it.
    pub candidate_applied: bool,
    pub q: usize,
    /// Cost of the applied trajectory, `V_N`.
    pub v_n: f64,
    /// Candidate cost the step was compared against; `None` at the first step.
    pub j_tilde: Option<f64>,
    pub v_measured: Option<f64>,
    pub v_backup: Option<f64>,
    pub measured_status: OcpStatus,
    pub backup_status: Option<OcpStatus>,
    pub slack: f64,
    /// Largest constraint residual of the candidate, checked when the
    /// measured path is rejected.
    pub candidate_residual: Option<f64>,
    /// `J̃_{k+1} − V_N + ℓ₀ − ½‖w‖²_P`, zero up to the terminal-cost residual.
    pub descent_residual: f64,
    pub x: Vec<f64>,
    pub u_cl: Vec<f64>,
    pub basis_len: usize,
    pub solve_seconds: f64,
}

/// Output of one controller step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: DVector<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Controller memory: current basis, consecutive-backup counter, the shifted
/// candidate for the next step and the germs of past disturbances.
#[derive(Clone, Debug)]
pub struct Controller {
    setup: Arc<ControllerSetup>,
    k: usize,
    q: usize,
    basis: Option<PceBasis>,
    candidate: Option<Candidate>,
    germs: BTreeMap<Tag, Vec<f64>>,
    last: Option<(DVector<f64>, DVector<f64>)>,
}

impl Controller {
    pub fn new(setup: Arc<ControllerSetup>) -> Self {
        Self {
            setup,
            k: 0,
            q: 0,
            basis: None,
            candidate: None,
            germs: BTreeMap::new(),
            last: None,
        }
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn backups(&self) -> usize {
        self.q
    }

    /// Basis of the last applied solution.
    pub fn basis(&self) -> Option<&PceBasis> {
        self.basis.as_ref()
    }

    pub fn candidate(&self) -> Option<&Candidate> {
        self.candidate.as_ref()
    }

    /// `J̃` for the next step, `+∞` before the first step.
    pub fn j_tilde(&self) -> f64 {
        self.candidate.as_ref().map_or(f64::INFINITY, |c| c.cost)
    }

    fn problem(&self, basis: PceBasis, init: PceVector) -> Result<OcpProblem<'_>> {
        let s = &*self.setup;
        OcpProblem::new(&s.config, &s.repr, &s.terminal, &s.disturbance, basis, init)
    }

    fn past_disturbance(&self, w_prev: Option<&DVector<f64>>, x: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        let Some((x_prev, u_prev)) = &self.last else {
            return Ok(None);
        };
        if let Some(w) = w_prev {
            return Ok(Some(w.clone()));
        }
        let est = self
            .setup
            .estimator
            .as_ref()
            .ok_or_else(|| Error::arg("past disturbance missing and no estimator configured"))?;
        est.estimate(x_prev, u_prev, x).map(Some)
    }

    /// One step of the loop at the measured state `x`. `w_prev` is the
    /// realised disturbance of the previous step, if measured.
    pub fn step(&mut self, x: &DVector<f64>, w_prev: Option<&DVector<f64>>) -> Result<StepOutcome> {
        let s = Arc::clone(&self.setup);
        let (nx, _) = s.repr.dims();
        if x.len() != nx {
            return Err(Error::dim("measured state dimension"));
        }
        let k = self.k;
        let tag = k as Tag;
        let started = Instant::now();
        if let Some(w) = self.past_disturbance(w_prev, x)? {
            self.germs.insert(tag - 1, s.disturbance.fit_germs(&w)?);
        }
        let j_tilde = self.j_tilde();
        let exact = |sol: &OcpSolution, bound: f64| {
            sol.status == OcpStatus::Optimal && sol.slack_norm() <= SLACK_TOL && sol.value <= bound
        };

        let fresh = PceBasis::fresh(s.disturbance.template().to_vec(), s.config.horizon, tag)?;
        let init = PceVector::deterministic(x, fresh.len());
        let measured = self.problem(fresh.clone(), init)?.solve()?;
        let v_measured = (measured.status == OcpStatus::Optimal).then_some(measured.value);

        let mut backup_status = None;
        let mut v_backup = None;
        let mut candidate_residual = None;
        let mut candidate_applied = false;
        let (path, basis, xs, us, slack) = if exact(&measured, j_tilde) {
            self.q = 0;
            let slack = measured.slack_norm();
            (Path::Measured, fresh, measured.x, measured.u, slack)
        } else {
            let Some(cand) = self.candidate.take() else {
                return Err(Error::Infeasible {
                    step: k,
                    reason: format!("measured problem {:?} at the first step", measured.status),
                });
            };
            let problem = self.problem(cand.basis.clone(), cand.x[0].clone())?;
            let res = problem.residuals(&cand.x, &cand.u)?.max();
            candidate_residual = Some(res);
            let backup = problem.solve()?;
            backup_status = Some(backup.status);
            v_backup = (backup.status == OcpStatus::Optimal).then_some(backup.value);
            self.q += 1;
            if exact(&backup, cand.cost) {
                let slack = backup.slack_norm();
                (Path::Backup, cand.basis, backup.x, backup.u, slack)
            } else if res <= CANDIDATE_TOL {
                log::debug!("step {k}: backup {:?}, applying shifted candidate", backup.status);
                candidate_applied = true;
                (Path::Backup, cand.basis, cand.x, cand.u, 0.0)
            } else {
                return Err(Error::Infeasible {
                    step: k,
                    reason: format!(
                        "measured {:?}, backup {:?}, candidate residual {res:e}",
                        measured.status, backup.status
                    ),
                });
            }
        };

        let cfg = &s.config;
        let v_n = ocp::evaluate_cost(&xs, &us, &basis, &cfg.q, &cfg.r, &s.terminal.p)?;
        let u = realize_feedback(&us[0], &basis, &self.germs)?;
        let next = shift_candidate(
            &xs,
            &us,
            &basis,
            &s.terminal,
            &s.disturbance,
            &cfg.q,
            &cfg.r,
            tag + cfg.horizon as Tag,
        )?;
        let norms = basis.norms();
        let first = ocp::weighted(&xs[0], &cfg.q, norms) + ocp::weighted(&us[0], &cfg.r, norms);
        let w_new = s.disturbance.placed(&next.basis, tag + cfg.horizon as Tag)?;
        let w_term = ocp::weighted(&w_new, &s.terminal.p, next.basis.norms());
        let descent_residual = next.cost - v_n + first - w_term;

        let oldest = basis.x_tags().into_iter().min().unwrap_or(tag);
        self.germs.retain(|&t, _| t >= oldest);
        self.basis = Some(basis);
        self.candidate = Some(next);
        self.last = Some((x.clone(), u.clone()));
        self.k += 1;

        let diagnostics = StepDiagnostics {
            k,
            path,
            candidate_applied,
            q: self.q,
            v_n,
            j_tilde: j_tilde.is_finite().then_some(j_tilde),
            v_measured,
            v_backup,
            measured_status: measured.status,
            backup_status,
            slack,
            candidate_residual,
            descent_residual,
            x: x.iter().copied().collect(),
            u_cl: u.iter().copied().collect(),
            basis_len: self.basis.as_ref().map_or(0, PceBasis::len),
            solve_seconds: started.elapsed().as_secs_f64(),
        };
        Ok(StepOutcome { u, diagnostics })
    }
}
