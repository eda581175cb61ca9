use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskflood::distrisk::{cvar_risk, RiskLevel, ScenarioDistribution};
use riskflood::optimize::toys::{FnFamily, LinearFamily, QuadraticFamily};
use riskflood::optimize::{
    cvar_objective, exact_objective, offset_worstcase_objective, solve, Objective, OptError, OptimizationResult,
    ProfitModel, Smoothing, SolverConfig, Termination,
};

fn unit_config() -> SolverConfig {
    SolverConfig { scale: 1.0, ..SolverConfig::default() }
}

fn cvar_of(profits: Vec<f64>, alpha: f64) -> f64 {
    cvar_risk(&ScenarioDistribution::new(profits).unwrap(), RiskLevel::new(alpha).unwrap())
}

fn check_result(model: &dyn ProfitModel, objective: &Objective, r: &OptimizationResult) {
    let (lb, ub) = model.bounds();
    assert!(r.u_opt.iter().zip(&lb).zip(&ub).all(|((u, l), h)| l <= u && u <= h));
    let fresh = exact_objective(model, objective, &r.u_opt).unwrap();
    assert!((fresh - r.objective).abs() <= 1e-10 * fresh.abs().max(1.0));
    for w in r.trace.windows(2) {
        if (w[0].start, w[0].stage) == (w[1].start, w[1].stage) {
            assert!(w[1].objective <= w[0].objective, "ascent in trace: {:?} -> {:?}", w[0], w[1]);
        }
    }
}

fn random_family(rng: &mut ChaCha8Rng, n: usize) -> QuadraticFamily {
    QuadraticFamily {
        thetas: (0..n).map(|_| vec![rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)]).collect(),
        lb: vec![-2.0, -2.0],
        ub: vec![2.0, 2.0],
    }
}

/// Minimum of `f` over a square grid of `steps + 1` points per side,
/// clipped to the box [-2, 2]^2.
fn grid_minimum(f: &dyn Fn([f64; 2]) -> f64, origin: [f64; 2], h: f64, steps: usize) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..=steps {
        for b in 0..=steps {
            let u = [(origin[0] + a as f64 * h).clamp(-2.0, 2.0), (origin[1] + b as f64 * h).clamp(-2.0, 2.0)];
            let v = f(u);
            if v < best.0 {
                best = (v, u[0], u[1]);
            }
        }
    }
    best
}

#[test]
fn cvar_minimizer_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let steps = 400;
    let h = 4.0 / steps as f64;
    for case in 0..6 {
        let n = 3 + case % 4;
        let model = random_family(&mut rng, n);
        for alpha in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let risk = |u: [f64; 2]| cvar_of(model.profits(&u).unwrap(), alpha);
            let coarse = grid_minimum(&risk, [-2.0, -2.0], h, steps);
            // Zoom in around the coarse minimizer to locate the optimum
            // below the coarse resolution.
            let mut fine = coarse;
            let mut fh = h;
            for _ in 0..4 {
                fh /= 10.0;
                fine = grid_minimum(&risk, [fine.1 - 50.0 * fh, fine.2 - 50.0 * fh], fh, 100);
            }
            let objective = Objective::CVaR(alpha);
            let r = solve(&model, &objective, &unit_config(), &[vec![0.0, 0.0], vec![-1.5, 1.5]]).unwrap();
            check_result(&model, &objective, &r);
            assert!(
                r.objective <= coarse.0 + 0.01 * coarse.0.abs(),
                "case {case} alpha {alpha}: solver {} vs grid {}",
                r.objective,
                coarse.0
            );
            let dist = ((r.u_opt[0] - fine.1).powi(2) + (r.u_opt[1] - fine.2).powi(2)).sqrt();
            assert!(dist <= h, "case {case} alpha {alpha}: minimizer {:?} vs grid ({}, {})", r.u_opt, fine.1, fine.2);
        }
    }
}

#[test]
fn closed_form_subgradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let model = random_family(&mut rng, 6);
        let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let alpha = rng.random_range(0.05..1.0);
        let mut sorted = model.profits(&u).unwrap();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] < 1e-2) {
            continue;
        }
        let (value, grad) = cvar_objective(&model, &u, alpha, 1e-6).unwrap();
        assert!((value - cvar_of(model.profits(&u).unwrap(), alpha)).abs() < 1e-12);
        let h = 1e-6;
        for c in 0..2 {
            let (mut up, mut down) = (u, u);
            up[c] += h;
            down[c] -= h;
            let fd = (cvar_of(model.profits(&up).unwrap(), alpha) - cvar_of(model.profits(&down).unwrap(), alpha))
                / (2.0 * h);
            let scale = grad.iter().map(|g| g.abs()).fold(1e-3, f64::max);
            assert!((grad[c] - fd).abs() <= 1e-5 * scale, "grad {} vs fd {fd} at {u:?}, alpha {alpha}", grad[c]);
        }
        checked += 1;
    }
}

#[test]
fn expected_and_cvar_one_give_identical_iterates() {
    let model = QuadraticFamily {
        thetas: vec![vec![0.3, 1.7], vec![-1.2, 0.4], vec![2.2, -0.9]],
        lb: vec![-1.0, -1.0],
        ub: vec![1.0, 1.0],
    };
    let starts = [vec![-0.8, 0.9], vec![0.5, -0.5]];
    let a = solve(&model, &Objective::Expected, &unit_config(), &starts).unwrap();
    let b = solve(&model, &Objective::CVaR(1.0), &unit_config(), &starts).unwrap();
    assert_eq!(a, b);

    let c = solve(&model, &Objective::WorstCase, &unit_config(), &starts).unwrap();
    let d = solve(&model, &Objective::CVaR(0.0), &unit_config(), &starts).unwrap();
    assert_eq!(c, d);
}

#[test]
fn multistart_returns_best_basin() {
    // Risk (u^2 - 1)^2 + 0.3 u has basins near -1 (lower) and +1.
    let model = FnFamily {
        f: |u: &[f64]| vec![-((u[0] * u[0] - 1.0).powi(2) + 0.3 * u[0])],
        n_scenarios: 1,
        lb: vec![-2.0],
        ub: vec![2.0],
    };
    let starts = [vec![0.9], vec![-1.6], vec![1.7]];
    let objective = Objective::Expected;
    let config = unit_config();
    let all = solve(&model, &objective, &config, &starts).unwrap();
    let singles: Vec<f64> =
        starts.iter().map(|s| solve(&model, &objective, &config, std::slice::from_ref(s)).unwrap().objective).collect();
    let min = singles.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(all.objective, min);
    assert_eq!(all.best_start, 1);
    assert!(all.u_opt[0] < -0.9);
    assert!(singles[0] > min + 0.1 && singles[2] > min + 0.1);
    check_result(&model, &objective, &all);
}

#[test]
fn clamped_quadratic_minimizer() {
    let model = QuadraticFamily { thetas: vec![vec![3.0, -0.5, -4.0]], lb: vec![-1.0; 3], ub: vec![1.0; 3] };
    let r = solve(&model, &Objective::Expected, &unit_config(), &[vec![0.0; 3]]).unwrap();
    let expected = [1.0, -0.5, -1.0];
    for (u, e) in r.u_opt.iter().zip(expected) {
        assert!((u - e).abs() <= 1e-6, "{:?}", r.u_opt);
    }
    check_result(&model, &Objective::Expected, &r);
}

#[test]
fn stationary_start_terminates_on_kkt() {
    let model = QuadraticFamily { thetas: vec![vec![0.2, 0.3]], lb: vec![-1.0; 2], ub: vec![1.0; 2] };
    let r = solve(&model, &Objective::Expected, &unit_config(), &[vec![0.2, 0.3]]).unwrap();
    assert_eq!(r.termination, Termination::Kkt);
    assert!(r.iterations <= 1);
    assert_eq!(r.u_opt, vec![0.2, 0.3]);
}

#[test]
fn offset_worst_case_linear_toy() {
    // psi = theta u with theta in {-1, 2}; against u_ref = 0.5 the worst
    // offset min(-(u - 0.5), 2 (u - 0.5)) peaks at u = 0.5 with value 0.
    let model = LinearFamily { thetas: vec![vec![-1.0], vec![2.0]], lb: vec![0.0], ub: vec![1.0] };
    let reference = model.profits(&[0.5]).unwrap();
    let objective = Objective::OffsetWorstCase { reference: reference.clone() };
    let r = solve(&model, &objective, &unit_config(), &[vec![0.1], vec![0.95]]).unwrap();
    assert!((r.u_opt[0] - 0.5).abs() <= 1e-4, "{:?}", r.u_opt);
    assert!(r.objective.abs() <= 1e-4);
    check_result(&model, &objective, &r);

    let (value, _) = offset_worstcase_objective(&model, &[0.5], &reference, Smoothing::Exact, 1e-6).unwrap();
    assert_eq!(value, 0.0);
    let (smooth, _) = offset_worstcase_objective(&model, &[0.5], &reference, Smoothing::Smoothed(10.0), 1e-6).unwrap();
    assert!(smooth >= 0.0 && smooth <= 2f64.ln() / 10.0 + 1e-12);
}

#[test]
fn offset_reference_shifted_toy() {
    // Reference profits not generated by any control: the best worst offset
    // balances the two lines theta u - r_i.
    let model = LinearFamily { thetas: vec![vec![1.0], vec![-2.0]], lb: vec![-1.0], ub: vec![1.0] };
    let reference = vec![0.25, -0.5];
    // min(u - 0.25, -2u + 0.5) is maximal where both agree: u = 0.25.
    let objective = Objective::OffsetWorstCase { reference };
    let r = solve(&model, &objective, &unit_config(), &[vec![-0.9], vec![0.8]]).unwrap();
    assert!((r.u_opt[0] - 0.25).abs() <= 1e-4);
    assert!(r.objective.abs() <= 1e-4);
}

#[test]
fn invalid_problems_rejected() {
    let model = QuadraticFamily { thetas: vec![vec![0.0]], lb: vec![0.0], ub: vec![1.0] };
    let config = unit_config();
    assert!(matches!(solve(&model, &Objective::Expected, &config, &[]), Err(OptError::InvalidProblem(_))));
    assert!(matches!(
        solve(&model, &Objective::Expected, &config, &[vec![0.0, 1.0]]),
        Err(OptError::InvalidProblem(_))
    ));
    assert!(solve(&model, &Objective::CVaR(1.5), &config, &[vec![0.5]]).is_err());
    let bad = SolverConfig { kkt_tol: 0.0, ..unit_config() };
    assert!(matches!(solve(&model, &Objective::Expected, &bad, &[vec![0.5]]), Err(OptError::InvalidConfig(_))));
}

#[test]
fn failing_model_reports_every_start() {
    struct Broken;
    impl ProfitModel for Broken {
        fn n_controls(&self) -> usize {
            1
        }
        fn n_scenarios(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0], vec![1.0])
        }
        fn profits(&self, _: &[f64]) -> Result<Vec<f64>, OptError> {
            Err(OptError::InvalidProblem("simulator down".into()))
        }
    }
    match solve(&Broken, &Objective::Expected, &unit_config(), &[vec![0.2], vec![0.7]]) {
        Err(OptError::AllStartsFailed(msgs)) => assert_eq!(msgs.len(), 2),
        other => panic!("expected AllStartsFailed, got {other:?}"),
    }
}
