use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::{Excitation, RepresentationKind, Scenario, TerminalLevel, Variant};
use crate::controller::ControllerSetup;
use crate::data::{
    input_disturbance_signal, is_persistently_exciting, with_estimated_disturbances, DataRecord,
    DisturbanceFlag, HankelStack, OnlineEstimator, Plant,
};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::ocp::Representation;
use crate::terminal::{synthesize_k_h, AssumptionReport, ChanceBoxes, TerminalIngredients};

/// Stream reserved for offline data; closed-loop runs use streams from 1.
pub const DATA_STREAM: u64 = 0;

/// Products of the offline phase for one variant.
#[derive(Clone, Debug)]
pub struct OfflineArtifacts {
    pub variant: Variant,
    /// All collected samples, disturbances measured or estimated.
    pub record: DataRecord,
    /// The leading samples used for the stack and terminal synthesis.
    pub window: DataRecord,
    pub stack: HankelStack,
    pub terminal: TerminalIngredients,
    pub assumption: AssumptionReport,
    pub representation: RepresentationKind,
    /// `(Â, B̂)` when the OCP uses a model.
    pub model: Option<(DMatrix<f64>, DMatrix<f64>)>,
    pub prestabilizing_gain: Option<DMatrix<f64>>,
    pub pe_attempts: usize,
}

/// Serialised form of the terminal ingredients with the quantities plotted
/// alongside them.
#[derive(Clone, Debug, Serialize)]
pub struct IngredientsReport<'a> {
    pub scenario: &'a str,
    pub variant: Variant,
    pub representation: RepresentationKind,
    #[serde(flatten)]
    pub terminal: &'a TerminalIngredients,
    /// `½ tr(Cov[W] P)`.
    pub alpha: f64,
    pub sigma_x: f64,
    pub sigma_u: f64,
    pub assumption: &'a AssumptionReport,
    pub p_residual: f64,
    pub gamma_residual: f64,
    pub ik_residual: f64,
    #[serde(with = "option_matrix")]
    pub prestabilizing_gain: Option<&'a DMatrix<f64>>,
    #[serde(with = "option_matrix")]
    pub a_hat: Option<&'a DMatrix<f64>>,
    #[serde(with = "option_matrix")]
    pub b_hat: Option<&'a DMatrix<f64>>,
    pub pe_attempts: usize,
}

mod option_matrix {
    use nalgebra::DMatrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Option<&DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => crate::serde_util::matrix::serialize(m, s),
            None => s.serialize_none(),
        }
    }
}

/// `[Â B̂] = (X⁺ − W) [X; U]⁺`; exact for measured disturbances, the
/// least-squares model for estimated ones.
pub fn model_from_record(record: &DataRecord) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = linalg::vstack(&[&record.x_minus(), &record.u]);
    if linalg::rank(&d, RANK_RTOL) < d.nrows() {
        return Err(Error::InsufficientExcitation("[X; U] is rank deficient".into()));
    }
    let theta = (record.x_plus() - &record.w) * linalg::pinv(&d, RANK_RTOL);
    let nx = record.nx();
    Ok((
        theta.columns(0, nx).into_owned(),
        theta.columns(nx, record.nu()).into_owned(),
    ))
}

fn uniform_inputs<R: Rng>(rng: &mut R, nu: usize, amplitude: f64) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(nu, |_, _| rng.random_range(-amplitude..=amplitude))
}

fn processed(record: DataRecord, variant: Variant) -> Result<DataRecord> {
    if variant.measured() {
        Ok(record)
    } else {
        with_estimated_disturbances(&record)
    }
}

/// One draw of offline data following the excitation policy, with the
/// prestabilising gain when one was used.
pub fn collect<R: Rng>(
    scenario: &Scenario,
    plant: &Plant,
    variant: Variant,
    rng: &mut R,
) -> Result<(DataRecord, Option<DMatrix<f64>>)> {
    let (nx, nu) = (plant.nx(), plant.nu());
    let x0 = nalgebra::DVector::zeros(nx);
    let mut excite = ChaCha8Rng::seed_from_u64(rng.random());
    match scenario.data.excitation {
        Excitation::OpenLoopRandom { amplitude } => {
            let tr = plant.simulate_with(scenario.data.samples, &x0, rng, |_, _| {
                uniform_inputs(&mut excite, nu, amplitude)
            })?;
            let rec = DataRecord::new(tr.x, tr.u, tr.w, DisturbanceFlag::Measured)?;
            Ok((rec, None))
        }
        Excitation::Prestabilized {
            count_open,
            count_closed,
            amplitude,
        } => {
            let open = plant.simulate_with(count_open, &x0, rng, |_, _| {
                uniform_inputs(&mut excite, nu, amplitude)
            })?;
            let open_rec = processed(
                DataRecord::new(open.x.clone(), open.u.clone(), open.w.clone(), DisturbanceFlag::Measured)?,
                variant,
            )?;
            let gain = synthesize_k_h(&open_rec, &scenario.q, &scenario.r)?.k;
            let start = open.x.column(count_open).into_owned();
            let closed = plant.simulate_with(count_closed, &start, rng, |_, x| {
                &gain * x + uniform_inputs(&mut excite, nu, amplitude)
            })?;
            let t = count_open + count_closed;
            let mut x = DMatrix::zeros(nx, t + 1);
            x.columns_mut(0, count_open).copy_from(&open.x.columns(0, count_open));
            x.columns_mut(count_open, count_closed + 1).copy_from(&closed.x);
            let u = linalg::hstack(&[&open.u, &closed.u]);
            let w = linalg::hstack(&[&open.w, &closed.w]);
            Ok((DataRecord::new(x, u, w, DisturbanceFlag::Measured)?, Some(gain)))
        }
    }
}

/// Offline phase: collects data until the window is persistently exciting,
/// processes disturbances per variant, builds the stack and synthesises the
/// terminal ingredients.
pub fn run_offline(scenario: &Scenario, variant: Variant) -> Result<OfflineArtifacts> {
    scenario.validate()?;
    let plant = scenario.plant()?;
    let (nx, n) = (plant.nx(), scenario.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(DATA_STREAM);
    let order = n + nx + 1;
    let attempts = scenario.data.pe_retries + 1;
    for attempt in 1..=attempts {
        let (raw, gain) = collect(scenario, &plant, variant, &mut rng)?;
        let record = processed(raw, variant)?;
        let window = record.window(scenario.window())?;
        let signal = input_disturbance_signal(&window.u, &window.w);
        if !is_persistently_exciting(&signal, order, RANK_RTOL) {
            log::warn!("offline data attempt {attempt}: not persistently exciting of order {order}");
            continue;
        }
        let stack = HankelStack::build(&window, n)?;
        let config = scenario.ocp_config()?;
        let sigma_bar = scenario.disturbance_model()?.covariance();
        let terminal = TerminalIngredients::from_data(&window, &scenario.q, &scenario.r, &sigma_bar)?;
        let chance = ChanceBoxes {
            x_box: config.x_box.clone(),
            u_box: config.u_box.clone(),
            sigma_x: config.sigma_x,
            sigma_u: config.sigma_u,
        };
        let terminal = match scenario.terminal_level {
            TerminalLevel::Auto => terminal.with_auto_level(&chance)?,
            TerminalLevel::Fixed(level) => terminal.with_level(level)?,
        };
        let assumption = terminal.check(&chance);
        if !assumption.pass {
            log::warn!("terminal assumption fails at level {}", terminal.gamma_level);
        }
        let representation = if variant == Variant::IdentifiedModel {
            RepresentationKind::Model
        } else {
            scenario.representation
        };
        let model = match representation {
            RepresentationKind::Model => Some(model_from_record(&record)?),
            _ => None,
        };
        return Ok(OfflineArtifacts {
            variant,
            record,
            window,
            stack,
            terminal,
            assumption,
            representation,
            model,
            prestabilizing_gain: gain,
            pe_attempts: attempt,
        });
    }
    Err(Error::InsufficientExcitation(format!(
        "no persistently exciting data of order {order} after {attempts} attempts"
    )))
}

impl OfflineArtifacts {
    pub fn representation(&self) -> Result<Representation> {
        let gain = self.terminal.k.clone();
        match (self.representation, &self.model) {
            (RepresentationKind::Hankel, _) => Representation::hankel(self.stack.clone(), gain),
            (RepresentationKind::Predictor, _) => Representation::predictor(self.stack.clone(), gain),
            (RepresentationKind::Model, Some((a, b))) => Ok(Representation::model(a.clone(), b.clone())),
            (RepresentationKind::Model, None) => Err(Error::arg("model representation without a model")),
        }
    }

    pub fn controller_setup(&self, scenario: &Scenario) -> Result<Arc<ControllerSetup>> {
        let estimator = if self.variant.measured() {
            None
        } else {
            Some(OnlineEstimator::new(&self.record)?)
        };
        Ok(Arc::new(ControllerSetup {
            config: scenario.ocp_config()?,
            repr: self.representation()?,
            terminal: self.terminal.clone(),
            disturbance: scenario.disturbance_model()?,
            estimator,
        }))
    }

    /// `½ tr(Cov[W] P)`.
    pub fn alpha(&self, scenario: &Scenario) -> Result<f64> {
        let cov = scenario.disturbance_model()?.covariance();
        Ok(0.5 * (cov * &self.terminal.p).trace())
    }

    pub fn report<'a>(&'a self, scenario: &'a Scenario) -> Result<IngredientsReport<'a>> {
        let config = scenario.ocp_config()?;
        Ok(IngredientsReport {
            scenario: &scenario.name,
            variant: self.variant,
            representation: self.representation,
            terminal: &self.terminal,
            alpha: self.alpha(scenario)?,
            sigma_x: config.sigma_x,
            sigma_u: config.sigma_u,
            assumption: &self.assumption,
            p_residual: self.terminal.p_residual(&scenario.q, &scenario.r),
            gamma_residual: self.terminal.gamma_residual(),
            ik_residual: self.terminal.ik_residual(&self.window),
            prestabilizing_gain: self.prestabilizing_gain.as_ref(),
            a_hat: self.model.as_ref().map(|m| &m.0),
            b_hat: self.model.as_ref().map(|m| &m.1),
            pe_attempts: self.pe_attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_ingredients_match_riccati() {
        let s = Scenario::preset("scalar_case1").unwrap();
        let art = run_offline(&s, Variant::Measured).unwrap();
        let t = &art.terminal;
        assert!((t.p[(0, 0)] - (2.0 + 5f64.sqrt())).abs() < 5e-3, "{}", t.p);
        assert!((t.k[(0, 0)] + 1.618).abs() < 5e-3, "{}", t.k);
        assert!(art.assumption.pass);
        let (a, b) = art.model.as_ref().unwrap();
        assert!((a[(0, 0)] - 2.0).abs() < 1e-8 && (b[(0, 0)] - 1.0).abs() < 1e-8);
        assert_eq!(art.record.len(), 100);
    }

    #[test]
    fn reactor_window_and_variants() {
        let s = Scenario::preset("batch_reactor").unwrap();
        let art = run_offline(&s, Variant::Estimated).unwrap();
        assert_eq!(art.record.len(), 1000);
        assert_eq!(art.window.len(), 120);
        assert_eq!(art.record.flag, DisturbanceFlag::Estimated);
        assert_eq!(art.terminal.gamma_level, 1e-2);
        let iii = run_offline(&s, Variant::IdentifiedModel).unwrap();
        assert_eq!(iii.representation, RepresentationKind::Model);
        assert_eq!(iii.terminal, art.terminal);
    }

    #[test]
    fn offline_phase_is_deterministic() {
        let s = Scenario::preset("scalar_case2").unwrap();
        let a = run_offline(&s, Variant::Measured).unwrap();
        let b = run_offline(&s, Variant::Measured).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.terminal, b.terminal);
    }
}
