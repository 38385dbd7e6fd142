use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sddpc::data::{estimate_disturbances, is_persistently_exciting, Plant};
use sddpc::linalg::{self, RANK_RTOL};
use sddpc::ocp::{OcpConfig, OcpProblem, OcpSolution, OcpStatus, Representation};
use sddpc::pce::{
    causality_zero_indices, galerkin_closed_loop, galerkin_propagate, make_basis, DisturbanceModel,
    PceBasis, PceVector, PolyFamily,
};
use sddpc::sets::BoxSet;
use sddpc::terminal::{dare, dare_residual, ChanceBoxes, TerminalIngredients};

fn family() -> impl Strategy<Value = PolyFamily> {
    prop_oneof![Just(PolyFamily::Hermite), Just(PolyFamily::Legendre)]
}

proptest! {
    #[test]
    fn basis_size_and_norms(lx in 1usize..5, lw in 2usize..5, n in 1usize..12, fam in family()) {
        let b = make_basis(lx, lw, n, fam, -1, 0).unwrap();
        prop_assert_eq!(b.len(), lx + n * (lw - 1));
        prop_assert_eq!(b.lx(), lx);
        prop_assert!(b.functions()[0].is_constant());
        prop_assert!(b.norms().iter().all(|&v| v > 0.0));
        prop_assert_eq!(b.norms()[0], 1.0);
    }

    #[test]
    fn galerkin_matches_realisations(
        a in -2.0f64..2.0,
        bgain in 0.2f64..1.5,
        k in -1.5f64..0.5,
        c0 in -2.0f64..2.0,
        c1 in -1.0f64..1.0,
        sd in 0.01f64..1.0,
        seed in any::<u64>(),
    ) {
        let n = 6;
        let basis = make_basis(2, 2, n, PolyFamily::Hermite, -1, 0).unwrap();
        let w = DisturbanceModel::gaussian_diag(&[sd]).unwrap();
        let mut x0 = PceVector::zeros(1, basis.len());
        x0.coeffs_mut()[(0, 0)] = c0;
        x0.coeffs_mut()[(0, 1)] = c1;
        let am = DMatrix::from_element(1, 1, a);
        let bm = DMatrix::from_element(1, 1, bgain);
        let (xs, us) = galerkin_closed_loop(&am, &bm, &DMatrix::from_element(1, 1, k), &x0, &basis, &w, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let mut germs = BTreeMap::new();
            germs.insert(-1, w.sample_germs(&mut rng));
            for t in 0..n as i64 {
                germs.insert(t, w.sample_germs(&mut rng));
            }
            let phi = basis.eval(&germs).unwrap();
            let mut x = c0 + c1 * germs[&-1][0];
            for i in 0..n {
                let u = k * x;
                prop_assert!((us[i].realize(&phi).unwrap()[0] - u).abs() < 1e-9 * (1.0 + u.abs()));
                x = a * x + bgain * u + w.realize(&germs[&(i as i64)])[0];
                let z = xs[i + 1].realize(&phi).unwrap()[0];
                prop_assert!((z - x).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn causal_inputs_give_causal_states(lx in 1usize..4, lw in 2usize..4, seed in any::<u64>()) {
        let n = 5;
        let fam = PolyFamily::Legendre;
        let basis = make_basis(lx, lw, n, fam, -1, 0).unwrap();
        let l = basis.len();
        let w = DisturbanceModel::uniform(vec![0.3; lw - 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x0 = PceVector::zeros(lw - 1, l);
        for j in 0..lx {
            for r in 0..lw - 1 {
                x0.coeffs_mut()[(r, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let nx = lw - 1;
        let a = DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(nx, 1, |_, _| rng.random_range(-1.0..1.0));
        let inputs: Vec<PceVector> = (0..n)
            .map(|i| {
                let zeros = causality_zero_indices(i, lx, lw, l);
                PceVector::new(DMatrix::from_fn(1, l, |_, j| {
                    if zeros.contains(&j) { 0.0 } else { rng.random_range(-1.0..1.0) }
                }))
            })
            .collect();
        let xs = galerkin_propagate(&a, &b, &x0, &inputs, &basis, &w).unwrap();
        for (i, x) in xs.iter().enumerate() {
            for j in causality_zero_indices(i, lx, lw, l) {
                prop_assert!(x.coeffs().column(j).iter().all(|&v| v == 0.0), "step {} coefficient {}", i, j);
            }
        }
    }

    #[test]
    fn persistency_of_excitation_is_monotone(rows in 1usize..3, len in 8usize..40, order in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = DMatrix::from_fn(rows, len, |_, _| rng.random_range(-1.0..1.0));
        if is_persistently_exciting(&signal, order, RANK_RTOL) {
            prop_assert!(is_persistently_exciting(&signal, order - 1, RANK_RTOL));
        }
    }

    #[test]
    fn estimated_disturbances_annihilate_data_kernel(nx in 1usize..4, nu in 1usize..3, extra in 2usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = nx + nu + extra;
        let x = DMatrix::from_fn(nx, t + 1, |_, _| rng.random_range(-1.0..1.0));
        let u = DMatrix::from_fn(nu, t, |_, _| rng.random_range(-1.0..1.0));
        let w = estimate_disturbances(&x, &u).unwrap();
        let d = linalg::vstack(&[&x.columns(0, t).into_owned(), &u]);
        let proj = DMatrix::identity(t, t) - linalg::pinv(&d, RANK_RTOL) * &d;
        let m = x.columns(1, t).into_owned() - &w;
        prop_assert!(linalg::max_abs(&(m * proj)) < 1e-9);
    }

    #[test]
    fn riccati_solution_is_fixed_point(
        a in proptest::collection::vec(-1.5f64..1.5, 4),
        b in proptest::collection::vec(-1.0f64..1.0, 2),
        qd in 0.1f64..5.0,
        rd in 0.1f64..5.0,
    ) {
        let a = DMatrix::from_row_slice(2, 2, &a);
        let b = DMatrix::from_row_slice(2, 1, &b);
        let ctrb = linalg::hstack(&[&b, &(&a * &b)]);
        prop_assume!(linalg::singular_values(&ctrb).last().copied().unwrap_or(0.0) > 0.1);
        let q = DMatrix::identity(2, 2) * qd;
        let r = DMatrix::identity(1, 1) * rd;
        let p = dare(&a, &b, &q, &r).unwrap();
        prop_assert!(dare_residual(&a, &b, &q, &r, &p) <= 1e-8 * (1.0 + linalg::max_abs(&p)));
        let sigma = DMatrix::identity(2, 2) * 0.01;
        let t = TerminalIngredients::model_based(&a, &b, &q, &r, &sigma).unwrap();
        prop_assert!(linalg::spectral_radius(&t.mh) < 1.0);
        prop_assert!(linalg::lambda_min(&t.gamma) > 0.0);
        prop_assert!(t.gamma_residual() < 1e-10);
    }
}

struct ScalarOcp {
    config: OcpConfig,
    repr: Representation,
    terminal: TerminalIngredients,
    disturbance: DisturbanceModel,
}

fn scalar_ocp(x_radius: f64, u_radius: f64, sigma: f64) -> ScalarOcp {
    let one = DMatrix::from_element(1, 1, 1.0);
    let two = DMatrix::from_element(1, 1, 2.0);
    let disturbance = DisturbanceModel::gaussian_diag(&[0.1]).unwrap();
    let x_box = BoxSet::symmetric(&[x_radius]).unwrap();
    let u_box = BoxSet::symmetric(&[u_radius]).unwrap();
    let chance = ChanceBoxes {
        x_box: x_box.clone(),
        u_box: u_box.clone(),
        sigma_x: sigma,
        sigma_u: sigma,
    };
    let terminal = TerminalIngredients::model_based(&two, &one, &one, &one, &disturbance.covariance())
        .unwrap()
        .with_auto_level(&chance)
        .unwrap();
    let config = OcpConfig {
        horizon: 6,
        q: one.clone(),
        r: one.clone(),
        x_box,
        u_box,
        sigma_x: sigma,
        sigma_u: sigma,
        beta: sddpc::ocp::DEFAULT_BETA,
        covariance_mode: sddpc::ocp::CovarianceMode::Semidefinite,
        terminal_constraints: true,
        solver: Default::default(),
    };
    ScalarOcp {
        config,
        repr: Representation::model(two, one),
        terminal,
        disturbance,
    }
}

fn solve(p: &ScalarOcp, x0: f64) -> OcpSolution {
    let basis = PceBasis::fresh(p.disturbance.template().to_vec(), p.config.horizon, 0).unwrap();
    let init = PceVector::deterministic(&DVector::from_element(1, x0), basis.len());
    OcpProblem::new(&p.config, &p.repr, &p.terminal, &p.disturbance, basis, init)
        .unwrap()
        .solve()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ocp_solution_is_causal_and_exact(x0 in -1.5f64..1.5) {
        let p = scalar_ocp(2.0, 3.0, 1.645);
        let s = solve(&p, x0);
        prop_assert_eq!(s.status, OcpStatus::Optimal);
        prop_assert!(s.slack_norm() < 1e-7);
        for (i, u) in s.u.iter().enumerate() {
            prop_assert!(u.coeffs().columns(i + 1, u.len() - i - 1).iter().all(|&v| v == 0.0));
        }
        for (i, x) in s.x.iter().enumerate() {
            prop_assert!(x.coeffs().columns(i + 1, x.len() - i - 1).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn value_is_monotone_in_constraint_tightness(x0 in -1.2f64..1.2, grow in 1.0f64..2.0) {
        let tight = solve(&scalar_ocp(2.0, 3.0, 1.645), x0);
        let loose_box = solve(&scalar_ocp(2.0 * grow, 3.0 * grow, 1.645), x0);
        let loose_sigma = solve(&scalar_ocp(2.0, 3.0, 1.645 / grow), x0);
        prop_assert_eq!(tight.status, OcpStatus::Optimal);
        for s in [&loose_box, &loose_sigma] {
            prop_assert_eq!(s.status, OcpStatus::Optimal);
            prop_assert!(s.value <= tight.value * (1.0 + 1e-6) + 1e-9, "{} > {}", s.value, tight.value);
        }
    }
}

#[test]
fn fresh_plant_data_has_expected_stack_rank() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let plant = Plant::new(DMatrix::from_element(1, 1, 2.0), one, DisturbanceModel::gaussian_diag(&[0.1]).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut excite = ChaCha8Rng::seed_from_u64(4);
    let tr = plant
        .simulate_with(60, &DVector::zeros(1), &mut rng, |_, x| {
            DVector::from_element(1, -1.5 * x[0] + excite.random_range(-1.0..1.0))
        })
        .unwrap();
    let n = 5;
    let stack = sddpc::data::HankelStack::build(
        &sddpc::data::DataRecord::new(tr.x, tr.u, tr.w, sddpc::data::DisturbanceFlag::Measured).unwrap(),
        n,
    )
    .unwrap();
    assert_eq!(linalg::rank(&stack.stacked(), RANK_RTOL), 1 + 2 * n);
}
