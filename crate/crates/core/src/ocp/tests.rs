use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{DataRecord, DisturbanceFlag, Plant};
use crate::pce::PceBasis;

const N: usize = 5;

struct Fixture {
    record: DataRecord,
    disturbance: DisturbanceModel,
    config: OcpConfig,
    terminal: TerminalIngredients,
}

fn scalar_fixture(horizon: usize) -> Fixture {
    let one = DMatrix::from_element(1, 1, 1.0);
    let disturbance = DisturbanceModel::gaussian_diag(&[0.1]).unwrap();
    let plant = Plant::new(DMatrix::from_element(1, 1, 2.0), one.clone(), disturbance.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut excite = ChaCha8Rng::seed_from_u64(12);
    let tr = plant
        .simulate_with(100, &DVector::zeros(1), &mut rng, |_, x| {
            DVector::from_element(1, -1.5 * x[0] + excite.random_range(-1.0..1.0))
        })
        .unwrap();
    let record = DataRecord::new(tr.x, tr.u, tr.w, DisturbanceFlag::Measured).unwrap();
    let sigma_bar = disturbance.covariance();
    let terminal = TerminalIngredients::model_based(
        &DMatrix::from_element(1, 1, 2.0),
        &one,
        &one,
        &one,
        &sigma_bar,
    )
    .unwrap();
    let config = OcpConfig {
        horizon,
        q: one.clone(),
        r: one,
        x_box: BoxSet::symmetric(&[5.0]).unwrap(),
        u_box: BoxSet::symmetric(&[10.0]).unwrap(),
        sigma_x: 1.645,
        sigma_u: 1.645,
        beta: DEFAULT_BETA,
        covariance_mode: CovarianceMode::Semidefinite,
        terminal_constraints: true,
        solver: SolverOptions::default(),
    };
    Fixture {
        record,
        disturbance,
        config,
        terminal,
    }
}

fn model_repr() -> Representation {
    let one = DMatrix::from_element(1, 1, 1.0);
    Representation::model(DMatrix::from_element(1, 1, 2.0), one)
}

fn solve(f: &Fixture, repr: &Representation, x0: f64) -> OcpSolution {
    let basis = PceBasis::fresh(f.disturbance.template().to_vec(), f.config.horizon, 0).unwrap();
    let init = PceVector::deterministic(&DVector::from_element(1, x0), basis.len());
    OcpProblem::new(&f.config, repr, &f.terminal, &f.disturbance, basis, init)
        .unwrap()
        .solve()
        .unwrap()
}

#[test]
fn representations_agree() {
    let f = scalar_fixture(N);
    let stack = HankelStack::build(&f.record, N).unwrap();
    let sols: Vec<OcpSolution> = [
        model_repr(),
        Representation::predictor(stack.clone(), f.terminal.k.clone()).unwrap(),
        Representation::hankel(stack, f.terminal.k.clone()).unwrap(),
    ]
    .iter()
    .map(|r| solve(&f, r, 1.0))
    .collect();
    for s in &sols {
        assert_eq!(s.status, OcpStatus::Optimal);
        assert!(s.slack_norm() < 1e-7);
    }
    for s in &sols[1..] {
        assert!(
            (s.value - sols[0].value).abs() < 1e-5 * (1.0 + sols[0].value),
            "{} vs {}",
            s.value,
            sols[0].value
        );
        for i in 0..N {
            assert!((s.u[i].coeffs() - sols[0].u[i].coeffs()).amax() < 1e-4);
        }
    }
    assert!(sols[2].g.is_some());
}

#[test]
fn solution_meets_own_constraints() {
    let f = scalar_fixture(N);
    let repr = Representation::predictor(HankelStack::build(&f.record, N).unwrap(), f.terminal.k.clone()).unwrap();
    let basis = PceBasis::fresh(f.disturbance.template().to_vec(), N, 0).unwrap();
    let init = PceVector::deterministic(&DVector::from_element(1, 1.5), basis.len());
    let p = OcpProblem::new(&f.config, &repr, &f.terminal, &f.disturbance, basis, init).unwrap();
    let s = p.solve().unwrap();
    let res = p.residuals(&s.x, &s.u).unwrap();
    assert!(res.max() < 1e-6, "{res:?}");
    let recomputed = evaluate_cost(&s.x, &s.u, &p.basis, &f.config.q, &f.config.r, &f.terminal.p).unwrap();
    assert!((recomputed - s.value).abs() < 1e-12);
    assert!((s.value_with_slack - s.value).abs() < 1e-5 * (1.0 + s.value));
}

#[test]
fn causality_zeros_in_inputs() {
    let f = scalar_fixture(N);
    let s = solve(&f, &model_repr(), 1.0);
    // With L_x = 1 and L_w = 2, input i depends on coefficients 0..=i only.
    for (i, u) in s.u.iter().enumerate() {
        for j in (i + 1)..u.len() {
            assert_eq!(u.coeffs()[(0, j)], 0.0);
        }
    }
}

#[test]
fn far_initial_state_is_infeasible() {
    let f = scalar_fixture(N);
    let s = solve(&f, &model_repr(), 100.0);
    assert_eq!(s.status, OcpStatus::Infeasible);
    assert!(s.value.is_infinite());
}

#[test]
fn slack_activates_only_when_needed() {
    let mut f = scalar_fixture(N);
    f.config.x_box = BoxSet::symmetric(&[1e3]).unwrap();
    f.config.u_box = BoxSet::symmetric(&[1e3]).unwrap();
    f.config.beta = 1.0;
    // With a cheap penalty the solver trades constraint mismatch for cost.
    let s = solve(&f, &model_repr(), 50.0);
    assert_eq!(s.status, OcpStatus::Optimal);
    assert!(s.slack_norm() > 1e-3);
    f.config.beta = DEFAULT_BETA;
    let s = solve(&f, &model_repr(), 0.5);
    assert!(s.slack_norm() < 1e-7);
}

#[test]
fn deterministic_single_step_matches_lqr_shape() {
    let mut f = scalar_fixture(1);
    f.config.terminal_constraints = false;
    let s = solve(&f, &model_repr(), 1.0);
    // min ½x0² + ½u² + ½P(2x0 + u)² over u.
    let p = f.terminal.p[(0, 0)];
    let u = -2.0 * p / (1.0 + p);
    assert!((s.u[0].mean()[0] - u).abs() < 1e-6);
    assert_eq!(s.status, OcpStatus::Optimal);
}

#[test]
fn variable_counts_follow_causality() {
    let f = scalar_fixture(N);
    let repr = Representation::hankel(HankelStack::build(&f.record, N).unwrap(), f.terminal.k.clone()).unwrap();
    let basis = PceBasis::fresh(f.disturbance.template().to_vec(), N, 0).unwrap();
    let l = basis.len();
    let init = PceVector::deterministic(&DVector::from_element(1, 1.0), l);
    let p = OcpProblem::new(&f.config, &repr, &f.terminal, &f.disturbance, basis, init).unwrap();
    let c = p.variable_counts();
    assert_eq!(c.x_free + c.x_pinned, (N + 1) * l);
    assert_eq!(c.x_free, (N + 1) * l);
    assert_eq!(c.u_free + c.u_pinned, N * l);
    assert_eq!(c.u_free, (1..=N).sum::<usize>());
    assert_eq!(c.g, (100 - N + 1) * l);
    assert_eq!(c.c, 1);
    let prog = p.to_triplets().unwrap();
    assert_eq!(prog.n, c.x_free + c.u_free + 2 * c.c + c.g + c.aux);
}

#[test]
fn semidefinite_and_diagonal_modes_on_two_states() {
    let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.2, 0.0, 0.9]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    let disturbance = DisturbanceModel::gaussian_diag(&[0.05, 0.05]).unwrap();
    let terminal = TerminalIngredients::model_based(&a, &b, &q, &r, &disturbance.covariance()).unwrap();
    let repr = Representation::model(a, b);
    let mut config = OcpConfig {
        horizon: 4,
        q,
        r,
        x_box: BoxSet::symmetric(&[5.0, 5.0]).unwrap(),
        u_box: BoxSet::symmetric(&[5.0]).unwrap(),
        sigma_x: 1.645,
        sigma_u: 1.645,
        beta: DEFAULT_BETA,
        covariance_mode: CovarianceMode::Semidefinite,
        terminal_constraints: true,
        solver: SolverOptions::default(),
    };
    let mut values = Vec::new();
    for mode in [CovarianceMode::Semidefinite, CovarianceMode::Diagonal] {
        config.covariance_mode = mode;
        let basis = PceBasis::fresh(disturbance.template().to_vec(), 4, 0).unwrap();
        let init = PceVector::deterministic(&DVector::from_vec(vec![0.5, -0.5]), basis.len());
        let p = OcpProblem::new(&config, &repr, &terminal, &disturbance, basis, init).unwrap();
        let s = p.solve().unwrap();
        assert_eq!(s.status, OcpStatus::Optimal);
        assert!(p.residuals(&s.x, &s.u).unwrap().max() < 1e-6);
        values.push(s.value);
    }
    // The diagonal bound is a relaxation.
    assert!(values[1] <= values[0] + 1e-6);
}
