use nnreg_core::analysis::{eigendecompose, gk_apply};
use nnreg_core::linalg::{distance, norm};
use nnreg_core::solvers::{algorithm1_step, algorithm2_step, IterationState};
use nnreg_core::stopping::{preconditioned_residual, should_stop_modified};
use nnreg_core::{
    run_solver, run_solver_with_truth, DenseOperator, DiscrepancyScale, InverseProblem, Matrix, Method, OutputMap,
    PowerIterationConfig, Preconditioner, PreconditionerSpec, RelaxationSchedule, SolverConfig, StoppingRule,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn problem_strategy() -> impl Strategy<Value = (DenseOperator, Vec<f64>)> {
    (1usize..=6, 1usize..=5).prop_flat_map(|(m, n)| {
        (vec(-1.0f64..1.0, m * n), vec(-2.0f64..2.0, m))
            .prop_map(move |(a, y)| (DenseOperator::new(Matrix::new(m, n, a).unwrap()), y))
    })
}

fn config(method: Method, lambda: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(method).with_preconditioner(PreconditionerSpec::Scalar(0.3));
    cfg.omega = 1.0 / (lambda * lambda).max(1e-12);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_method_emits_nonnegative_iterates((op, y) in problem_strategy(), x0 in vec(-1.0f64..1.0, 5), steps in 0usize..60) {
        let lambda = op.spectral_norm(&PowerIterationConfig::default()).unwrap();
        prop_assume!(lambda > 1e-6);
        let p = InverseProblem::new(op.clone(), y, 0.0, 0.0).unwrap();
        for method in Method::ALL {
            let mut cfg = config(method, lambda);
            cfg.x0 = Some(x0[..op.cols()].to_vec());
            let out = run_solver(&cfg, &p, &StoppingRule::max_only(steps)).unwrap();
            prop_assert!(out.x().iter().all(|v| *v >= 0.0), "{method}: {:?}", out.x());
        }
    }

    #[test]
    fn zero_schedule_with_abs_reproduces_algorithm1((op, y) in problem_strategy(), mu in 0.01f64..2.0, steps in 0usize..80) {
        let p = InverseProblem::new(op, y, 0.0, 0.0).unwrap();
        let mut c1 = SolverConfig::new(Method::Algorithm1).with_preconditioner(PreconditionerSpec::Scalar(mu));
        c1.record_history = true;
        let mut c2 = c1.clone();
        c2.method = Method::Algorithm2;
        c2.schedule = RelaxationSchedule::Zero;
        c2.output_map = OutputMap::Abs;
        let stop = StoppingRule::max_only(steps);
        let a = run_solver(&c1, &p, &stop).unwrap();
        let b = run_solver(&c2, &p, &stop).unwrap();
        prop_assert_eq!(a.k_star, b.k_star);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.state.z), bits(&b.state.z));
        prop_assert_eq!(bits(a.x()), bits(b.x()));
        let (ha, hb) = (a.history.unwrap(), b.history.unwrap());
        prop_assert_eq!(bits(&ha.residual), bits(&hb.residual));
    }

    #[test]
    fn output_maps_are_nonexpansive_toward_the_cone(z in vec(-5.0f64..5.0, 1..10), plus_seed in vec(0.0f64..5.0, 10), a in 0.0f64..=0.5) {
        let plus = &plus_seed[..z.len()];
        for map in [OutputMap::Abs, OutputMap::PositivePart, OutputMap::Blend(a)] {
            let fz = map.apply(&z);
            prop_assert!(fz.iter().all(|v| *v >= 0.0));
            prop_assert!(distance(&fz, plus) <= distance(&z, plus) + 1e-12);
        }
    }

    #[test]
    fn spectral_formula_on_diagonal_problems(
        lam in vec(0.05f64..1.5, 1..=8),
        xd_raw in vec(0.0f64..1.0, 8),
        gap in vec(0.0f64..1.0, 8),
        mu_over in 0.0f64..2.0,
    ) {
        // μ ≥ λ_max keeps every factor (μ−λ)/(μ+λ) non-negative, so z_k ≥ x† ≥ 0
        let n = lam.len();
        let mu = lam.iter().cloned().fold(0.0, f64::max) + mu_over;
        let op = DenseOperator::diagonal(&lam);
        let xd = &xd_raw[..n];
        let x0: Vec<f64> = xd.iter().zip(&gap).map(|(a, b)| a + b).collect();
        let y = op.apply(xd).unwrap();
        let p = InverseProblem::exact(op.clone(), y).unwrap();
        let g = Preconditioner::scalar(mu, n).unwrap();
        let dec = eigendecompose(&op).unwrap();
        let e0: Vec<f64> = x0.iter().zip(xd).map(|(a, b)| a - b).collect();
        let mut s = IterationState::initial(Method::Algorithm1, &x0, &p, OutputMap::Abs).unwrap();
        for k in 1..=40 {
            s = algorithm1_step(&s, &p, &g).unwrap();
            let err: Vec<f64> = s.z.iter().zip(xd).map(|(a, b)| a - b).collect();
            let expected = gk_apply(&dec, mu, k, &e0).unwrap();
            prop_assert!(distance(&err, &expected) <= 1e-9);
        }
    }

    #[test]
    fn error_is_monotone_before_the_discrepancy_stop(seed in 0u64..1000, n in 2usize..=6) {
        let mut r = nnreg_core::rng::child(seed, 9);
        let a = nnreg_core::rng::gaussian_vec(&mut r, (n + 2) * n);
        let op = DenseOperator::new(Matrix::new(n + 2, n, a).unwrap());
        let xd: Vec<f64> = nnreg_core::rng::gaussian_vec(&mut r, n).iter().map(|v| v.abs()).collect();
        let y = op.apply(&xd).unwrap();
        let noise = nnreg_core::rng::gaussian_vec(&mut r, n + 2);
        let delta = 1e-2 * norm(&y);
        let scale = delta / norm(&noise);
        let yd: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + scale * b).collect();
        let p = InverseProblem::new(op, yd, 0.0, delta).unwrap();
        let mu = 0.5;
        let g = Preconditioner::scalar(mu, n).unwrap();
        let tau = 2.0 / mu;
        let mut s = IterationState::initial(Method::Algorithm1, &vec![0.0; n], &p, OutputMap::Abs).unwrap();
        let mut prev = distance(&s.z, &xd);
        for _ in 0..2000 {
            let r = preconditioned_residual(&p, &g, &s.z).unwrap();
            let d = should_stop_modified(r, DiscrepancyScale::Tau(tau), 0.0, delta, 0.0, &g).unwrap();
            if d.stop {
                break;
            }
            s = algorithm1_step(&s, &p, &g).unwrap();
            let e = distance(&s.z, &xd);
            prop_assert!(e <= prev + 1e-12, "{e} > {prev}");
            prev = e;
        }
    }
}

fn noise_free_instance(seed: u64, n: usize) -> (InverseProblem, Vec<f64>) {
    let mut r = nnreg_core::rng::child(seed, 17);
    let a = nnreg_core::rng::gaussian_vec(&mut r, (n + 1) * n);
    let op = DenseOperator::new(Matrix::new(n + 1, n, a).unwrap());
    let xbar: Vec<f64> = nnreg_core::rng::gaussian_vec(&mut r, n).iter().map(|v| v.abs()).collect();
    let y = op.apply(&xbar).unwrap();
    (InverseProblem::exact(op, y).unwrap(), xbar)
}

#[test]
fn algorithm2_stays_in_the_ball_around_a_solution() {
    for seed in 0..10 {
        let (p, xbar) = noise_free_instance(seed, 5);
        let g = Preconditioner::scalar(0.5, 5).unwrap();
        let x0 = vec![1.0; 5];
        let radius = distance(&x0, &xbar);
        for map in [OutputMap::Abs, OutputMap::PositivePart, OutputMap::Blend(0.25)] {
            let mut s = IterationState::initial(Method::Algorithm2, &x0, &p, map).unwrap();
            for _ in 0..500 {
                s = algorithm2_step(&s, &p, &g, RelaxationSchedule::Harmonic.alpha(s.k + 1), &x0, map).unwrap();
                assert!(distance(&s.z, &xbar) <= radius + 1e-12, "seed {seed}");
            }
        }
    }
}

#[test]
fn algorithm2_successive_differences_vanish() {
    for seed in 0..10 {
        let (p, _) = noise_free_instance(seed, 4);
        let g = Preconditioner::scalar(0.5, 4).unwrap();
        let x0 = vec![1.0; 4];
        let map = OutputMap::PositivePart;
        let mut s = IterationState::initial(Method::Algorithm2, &x0, &p, map).unwrap();
        let mut zs = vec![s.z.clone()];
        while s.k < 2001 {
            s = algorithm2_step(&s, &p, &g, RelaxationSchedule::Harmonic.alpha(s.k + 1), &x0, map).unwrap();
            if s.k <= 2 || s.k >= 2000 {
                zs.push(s.z.clone());
            }
        }
        let early = distance(&zs[2], &zs[1]);
        let late = distance(&zs[4], &zs[3]);
        assert!(late < early / 10.0, "seed {seed}: {late} vs {early}");
    }
}

#[test]
fn discrepancy_runs_terminate_well_before_the_cap() {
    for seed in 0..10 {
        let (exact, xd) = noise_free_instance(seed, 4);
        let y = exact.data_noisy.clone();
        let delta = 1e-3 * norm(&y);
        let mut yd = y.clone();
        yd[0] += delta;
        let p = InverseProblem::new(exact.operator_noisy.clone(), yd, 0.0, delta).unwrap();
        let mut cfg = SolverConfig::new(Method::Algorithm1).with_preconditioner(PreconditionerSpec::Scalar(0.5));
        cfg.record_history = true;
        let stop = StoppingRule::modified(DiscrepancyScale::Tau(4.0), 1.0, 1_000_000);
        let out = run_solver_with_truth(&cfg, &p, &stop, Some(&xd)).unwrap();
        let bound = nnreg_core::analysis::discrepancy_termination_bound(&[0.0; 4], &xd, 4.0, 0.5, delta, 0.0, 1.0).unwrap();
        assert!((out.k_star as f64) < bound, "seed {seed}");
        assert_eq!(out.reason, nnreg_core::StopReason::DiscrepancyMet);
    }
}
