use patankar_lab::matrix::SquareMatrix;
use patankar_lab::schemes::solve_patankar_system;
use patankar_lab::{integrate, step, Error, NodeFamily, Scheme, State, StepContext, TestProblem};
use proptest::prelude::*;

fn scheme_strategy() -> impl Strategy<Value = Scheme> {
    prop_oneof![
        (0.5f64..6.0).prop_map(|a| Scheme::mprk22(a).unwrap()),
        (1usize..=9).prop_map(|p| Scheme::mpdec(p, NodeFamily::Equispaced).unwrap()),
        (1usize..=9).prop_map(|p| Scheme::mpdec(p, NodeFamily::GaussLobatto).unwrap()),
    ]
}

/// Implicit Euler for the test problem by Cramer's rule.
fn implicit_euler(theta: f64, dt: f64, y: &State) -> State {
    let (a, b, c, d) = (1.0 + dt * theta, -dt * (1.0 - theta), -dt * theta, 1.0 + dt * (1.0 - theta));
    let det = a * d - b * c;
    State::from([(y[0] * d - b * y[1]) / det, (a * y[1] - c * y[0]) / det])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conservation_and_positivity(
        scheme in scheme_strategy(),
        theta in 0.001f64..0.999,
        log_eps in -10.0f64..-0.01,
        log_dt in -4.0f64..2.0,
    ) {
        let problem = TestProblem::new(theta).unwrap();
        let sys = problem.as_pds();
        let y0 = problem.initial_state(10f64.powf(log_eps));
        let ctx = StepContext::new(&sys, 10f64.powf(log_dt)).unwrap();
        let y1 = step(&scheme, &ctx, &y0).unwrap();
        prop_assert!((y1.sum() - y0.sum()).abs() <= 1e-12);
        prop_assert!(y1.is_positive());
    }

    #[test]
    fn positivity_for_huge_steps(
        scheme in scheme_strategy(),
        theta in 0.001f64..0.999,
        log_eps in -10.0f64..-0.01,
    ) {
        let problem = TestProblem::new(theta).unwrap();
        let sys = problem.as_pds();
        let ctx = StepContext::new(&sys, 1e4).unwrap();
        let y1 = step(&scheme, &ctx, &problem.initial_state(10f64.powf(log_eps))).unwrap();
        prop_assert!(y1.is_positive(), "{:?}", y1);
    }

    #[test]
    fn steady_state_is_a_fixed_point(
        scheme in scheme_strategy(),
        theta in 0.001f64..0.999,
        mass in 0.1f64..10.0,
        log_dt in -4.0f64..4.0,
    ) {
        let problem = TestProblem::new(theta).unwrap();
        let sys = problem.as_pds();
        let star = problem.steady_state_with_mass(mass);
        let ctx = StepContext::new(&sys, 10f64.powf(log_dt)).unwrap();
        let y = step(&scheme, &ctx, &star).unwrap();
        prop_assert!(y.max_abs_diff(&star) <= 1e-13 * mass);
    }

    #[test]
    fn second_order_members_coincide(
        theta in 0.01f64..0.99,
        log_eps in -8.0f64..-0.01,
        log_dt in -3.0f64..3.0,
    ) {
        let problem = TestProblem::new(theta).unwrap();
        let sys = problem.as_pds();
        let y0 = problem.initial_state(10f64.powf(log_eps));
        let ctx = StepContext::new(&sys, 10f64.powf(log_dt)).unwrap();
        let a = step(&Scheme::mprk22(1.0).unwrap(), &ctx, &y0).unwrap();
        let b = step(&Scheme::mpdec(2, NodeFamily::Equispaced).unwrap(), &ctx, &y0).unwrap();
        let c = step(&Scheme::mpdec(2, NodeFamily::GaussLobatto).unwrap(), &ctx, &y0).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-13);
        prop_assert!(b.max_abs_diff(&c) <= 1e-13);
    }

    #[test]
    fn first_order_member_is_implicit_euler(
        theta in 0.01f64..0.99,
        eps in 0.001f64..0.999,
        log_dt in -3.0f64..2.0,
    ) {
        let problem = TestProblem::new(theta).unwrap();
        let sys = problem.as_pds();
        let y0 = problem.initial_state(eps);
        let dt = 10f64.powf(log_dt);
        let ctx = StepContext::new(&sys, dt).unwrap();
        for family in [NodeFamily::Equispaced, NodeFamily::GaussLobatto] {
            let y = step(&Scheme::mpdec(1, family).unwrap(), &ctx, &y0).unwrap();
            prop_assert!(y.max_abs_diff(&implicit_euler(theta, dt, &y0)) <= 1e-13);
        }
    }

    #[test]
    fn solver_matches_cramer_on_m_matrices(
        a in 0.0f64..100.0,
        b in 0.0f64..100.0,
        r0 in 0.01f64..10.0,
        r1 in 0.01f64..10.0,
    ) {
        let m = SquareMatrix::from_rows(&[&[1.0 + a, -b], &[-a, 1.0 + b]]);
        let x = solve_patankar_system(&m, &[r0, r1]).unwrap();
        let det = (1.0 + a) * (1.0 + b) - a * b;
        let oracle = [((1.0 + b) * r0 + b * r1) / det, (a * r0 + (1.0 + a) * r1) / det];
        prop_assert!(x[0] > 0.0 && x[1] > 0.0);
        for k in 0..2 {
            prop_assert!((x[k] - oracle[k]).abs() <= 1e-12 * oracle[k].max(1.0));
        }
    }
}

#[test]
fn three_species_m_matrix_solve() {
    let m = SquareMatrix::from_rows(&[&[3.0, -1.0, -0.5], &[-1.0, 2.5, -0.5], &[-1.0, -0.5, 2.0]]);
    let rhs = [1.0, 2.0, 3.0];
    let x = solve_patankar_system(&m, &rhs).unwrap();
    let back = m.mul_vec(&x);
    for k in 0..3 {
        assert!((back[k] - rhs[k]).abs() < 1e-14);
        assert!(x[k] > 0.0);
    }
}

#[test]
fn singular_system_is_reported() {
    let m = SquareMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
    let err = solve_patankar_system(&m, &[1.0, 1.0]).unwrap_err();
    assert!(matches!(err, Error::SingularSystem { .. }));
}

#[test]
fn mpdec2_local_error_is_third_order() {
    let problem = TestProblem::new(0.3).unwrap();
    let sys = problem.as_pds();
    let y0 = State::from([0.9, 0.1]);
    let scheme = Scheme::mpdec(2, NodeFamily::Equispaced).unwrap();
    let errors: Vec<f64> = (6..=10)
        .map(|k| {
            let dt = 0.5f64.powi(k);
            let y = step(&scheme, &StepContext::new(&sys, dt).unwrap(), &y0).unwrap();
            y.max_abs_diff(&problem.exact_solution(&y0, dt).unwrap())
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 7.0 && ratio < 9.5, "local error ratio {ratio} from {errors:?}");
    }
}

#[test]
fn mpdec3_gl_converges_at_third_order() {
    let problem = TestProblem::new(0.3).unwrap();
    let sys = problem.as_pds();
    let y0 = State::from([0.99, 0.01]);
    let exact = problem.exact_solution(&y0, 1.0).unwrap();
    let scheme = Scheme::mpdec(3, NodeFamily::GaussLobatto).unwrap();
    let err = |n: usize| {
        let ctx = StepContext::new(&sys, 1.0 / n as f64).unwrap();
        integrate(&scheme, &ctx, &y0, n).unwrap().last().unwrap().max_abs_diff(&exact)
    };
    let order = (err(64) / err(128)).log2();
    assert!((order - 3.0).abs() < 0.2, "order {order}");
}

#[test]
fn long_integration_reaches_steady_state() {
    let problem = TestProblem::new(0.7).unwrap();
    let sys = problem.as_pds();
    let ctx = StepContext::new(&sys, 0.5).unwrap();
    for scheme in [Scheme::mprk22(0.5).unwrap(), Scheme::mpdec(5, NodeFamily::GaussLobatto).unwrap()] {
        let tr = integrate(&scheme, &ctx, &problem.initial_state(1e-6), 200).unwrap();
        assert_eq!(tr.len(), 201);
        assert!(tr.last().unwrap().max_abs_diff(&problem.steady_state()) < 1e-12, "{scheme}");
    }
}

#[test]
fn step_rejects_bad_inputs() {
    let sys = TestProblem::new(0.3).unwrap().as_pds();
    assert!(StepContext::new(&sys, 0.0).is_err());
    assert!(StepContext::new(&sys, f64::NAN).is_err());
    let ctx = StepContext::new(&sys, 0.1).unwrap();
    let scheme = Scheme::mprk22(1.0).unwrap();
    assert!(matches!(
        step(&scheme, &ctx, &State::from([1.0, 0.0])),
        Err(Error::NonPositiveState { index: 1, .. })
    ));
    assert!(step(&scheme, &ctx, &State::from([1.0])).is_err());
    assert!(matches!(step(&Scheme::SspMprk43, &ctx, &State::from([0.5, 0.5])), Err(Error::Unimplemented(_))));
    assert!(Scheme::mprk22(0.49).is_err());
}
