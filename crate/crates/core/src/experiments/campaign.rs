use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::offline::OfflineArtifacts;
use super::scenario::{Scenario, Variant};
use crate::controller::{Controller, ControllerSetup, StepDiagnostics};
use crate::data::Plant;
use crate::error::Result;
use crate::ocp::stage_cost;
use crate::par;

/// Steps excluded from long-run statistics.
pub const TRANSIENT_STEPS: usize = 10;

/// Initial state and disturbance sequence of one run; identical across
/// variants for the same seed and run id.
#[derive(Clone, Debug, PartialEq)]
pub struct RunInputs {
    pub run_id: usize,
    pub x0: DVector<f64>,
    pub w: Vec<DVector<f64>>,
}

impl RunInputs {
    pub fn draw(scenario: &Scenario, run_id: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(run_id as u64 + 1);
        let x0 = scenario.initial_state.sample(&mut rng)?;
        let dist = scenario.disturbance_model()?;
        let w = (0..scenario.steps).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self { run_id, x0, w })
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub stage_cost: f64,
    pub diagnostics: StepDiagnostics,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run_id: usize,
    pub steps: Vec<StepRecord>,
    /// State after the last applied input.
    pub x_final: DVector<f64>,
    pub error: Option<String>,
}

impl RunResult {
    /// `Σ_k ½(‖x_k‖²_Q + ‖u_k‖²_R)` over the completed steps.
    pub fn closed_loop_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum()
    }

    /// States `x_0, …, x_K` including the final one.
    pub fn states(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.steps.iter().map(|s| &s.x).chain(std::iter::once(&self.x_final))
    }

    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

/// Simulates one closed loop; controller errors end the run and are kept.
pub fn simulate_run(
    setup: Arc<ControllerSetup>,
    plant: &Plant,
    variant: Variant,
    inputs: &RunInputs,
) -> RunResult {
    let mut ctrl = Controller::new(setup.clone());
    let cfg = &setup.config;
    let mut x = inputs.x0.clone();
    let mut steps = Vec::with_capacity(inputs.w.len());
    let mut error = None;
    for (k, w) in inputs.w.iter().enumerate() {
        let w_prev = (variant.measured() && k > 0).then(|| &inputs.w[k - 1]);
        match ctrl.step(&x, w_prev) {
            Ok(out) => {
                let next = plant.step(&x, &out.u, w);
                steps.push(StepRecord {
                    stage_cost: stage_cost(&x, &out.u, &cfg.q, &cfg.r),
                    x: std::mem::replace(&mut x, next),
                    u: out.u,
                    diagnostics: out.diagnostics,
                });
            }
            Err(e) => {
                log::warn!("run {} stopped at step {k}: {e}", inputs.run_id);
                error = Some(e.to_string());
                break;
            }
        }
    }
    RunResult {
        run_id: inputs.run_id,
        steps,
        x_final: x,
        error,
    }
}

/// How runs are distributed over threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub variant: Variant,
    pub alpha: f64,
    pub runs: Vec<RunResult>,
}

/// Runs `scenario.samples` independent closed loops.
pub fn run_campaign(scenario: &Scenario, artifacts: &OfflineArtifacts) -> Result<Campaign> {
    let ids: Vec<usize> = (0..scenario.samples).collect();
    run_campaign_with(scenario, artifacts, &ids, Execution::Parallel)
}

pub fn run_campaign_with(
    scenario: &Scenario,
    artifacts: &OfflineArtifacts,
    run_ids: &[usize],
    execution: Execution,
) -> Result<Campaign> {
    let setup = artifacts.controller_setup(scenario)?;
    let plant = scenario.plant()?;
    let inputs = run_ids
        .iter()
        .map(|&id| RunInputs::draw(scenario, id))
        .collect::<Result<Vec<_>>>()?;
    let variant = artifacts.variant;
    let job = |inp: &RunInputs| simulate_run(setup.clone(), &plant, variant, inp);
    let runs = match execution {
        Execution::Parallel => par::map(&inputs, job),
        Execution::Sequential => par::sequential_map(&inputs, job),
    };
    Ok(Campaign {
        variant,
        alpha: artifacts.alpha(scenario)?,
        runs,
    })
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Self::default();
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, count: n }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sd / (self.count as f64).sqrt()
        }
    }
}

/// Aggregate statistics of a campaign.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub variant: Variant,
    pub runs: usize,
    pub failed_runs: Vec<(usize, String)>,
    /// `½ tr(Cov[W] P)`.
    pub alpha: f64,
    /// The same bound without the ½.
    pub alpha_unscaled: f64,
    /// `J^cl`, sums of ½-convention stage costs.
    pub closed_loop_cost: MeanSd,
    pub closed_loop_cost_unscaled: MeanSd,
    /// Per-run average stage cost after the transient.
    pub long_run_stage_cost: MeanSd,
    pub transient_steps: usize,
    /// `ℓ̄_k`: average over runs and over steps `0..=k`.
    pub running_average: Vec<f64>,
    /// Fraction of runs violating each state-box coordinate, per step.
    pub x_violation_rate: Vec<Vec<f64>>,
    pub u_violation_rate: Vec<Vec<f64>>,
    /// Largest state violation rate after the transient.
    pub max_x_violation_rate_after_transient: f64,
    pub backup_steps: usize,
    pub candidate_applied_steps: usize,
    pub max_slack: f64,
    pub max_abs_descent_residual: f64,
    /// `max (V_N − J̃)`; never positive when the selection rule holds.
    pub max_v_minus_j_tilde: f64,
    pub solve_seconds: MeanSd,
}

impl Campaign {
    pub fn summary(&self, scenario: &Scenario) -> Summary {
        let runs = &self.runs;
        let steps = scenario.steps;
        let all_steps = || runs.iter().flat_map(|r| r.steps.iter());
        let failed_runs = runs
            .iter()
            .filter_map(|r| r.error.clone().map(|e| (r.run_id, e)))
            .collect();
        let closed_loop_cost = MeanSd::of(runs.iter().map(RunResult::closed_loop_cost));
        let closed_loop_cost_unscaled = MeanSd::of(runs.iter().map(|r| 2.0 * r.closed_loop_cost()));
        let long_run_stage_cost = MeanSd::of(runs.iter().filter_map(|r| {
            let tail = r.steps.get(TRANSIENT_STEPS..)?;
            (!tail.is_empty()).then(|| tail.iter().map(|s| s.stage_cost).sum::<f64>() / tail.len() as f64)
        }));
        let mut running_average = Vec::with_capacity(steps);
        let (mut total, mut count) = (0.0, 0usize);
        for k in 0..steps {
            for r in runs {
                if let Some(s) = r.steps.get(k) {
                    total += s.stage_cost;
                    count += 1;
                }
            }
            running_average.push(if count > 0 { total / count as f64 } else { f64::NAN });
        }
        let rate = |bx: &crate::sets::BoxSet, pick: &dyn Fn(&StepRecord) -> &DVector<f64>| {
            (0..steps)
                .map(|k| {
                    let at: Vec<&StepRecord> = runs.iter().filter_map(|r| r.steps.get(k)).collect();
                    (0..bx.dim())
                        .map(|c| {
                            if !bx.enabled[c] || at.is_empty() {
                                return 0.0;
                            }
                            let bad = at
                                .iter()
                                .filter(|s| {
                                    let v = pick(s)[c];
                                    v < bx.lower[c] || v > bx.upper[c]
                                })
                                .count();
                            bad as f64 / at.len() as f64
                        })
                        .collect()
                })
                .collect::<Vec<Vec<f64>>>()
        };
        let x_violation_rate = rate(&scenario.x_box, &|s| &s.x);
        let u_violation_rate = rate(&scenario.u_box, &|s| &s.u);
        let max_x_violation_rate_after_transient = x_violation_rate
            .iter()
            .skip(TRANSIENT_STEPS)
            .flatten()
            .copied()
            .fold(0.0, f64::max);
        Summary {
            scenario: scenario.name.clone(),
            variant: self.variant,
            runs: runs.len(),
            failed_runs,
            alpha: self.alpha,
            alpha_unscaled: 2.0 * self.alpha,
            closed_loop_cost,
            closed_loop_cost_unscaled,
            long_run_stage_cost,
            transient_steps: TRANSIENT_STEPS,
            running_average,
            x_violation_rate,
            u_violation_rate,
            max_x_violation_rate_after_transient,
            backup_steps: all_steps().filter(|s| s.diagnostics.path == crate::controller::Path::Backup).count(),
            candidate_applied_steps: all_steps().filter(|s| s.diagnostics.candidate_applied).count(),
            max_slack: all_steps().map(|s| s.diagnostics.slack).fold(0.0, f64::max),
            max_abs_descent_residual: all_steps()
                .map(|s| s.diagnostics.descent_residual.abs())
                .fold(0.0, f64::max),
            max_v_minus_j_tilde: all_steps()
                .filter_map(|s| s.diagnostics.j_tilde.map(|j| s.diagnostics.v_n - j))
                .fold(f64::NEG_INFINITY, f64::max),
            solve_seconds: MeanSd::of(all_steps().map(|s| s.diagnostics.solve_seconds)),
        }
    }
}
