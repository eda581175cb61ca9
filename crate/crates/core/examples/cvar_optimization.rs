//! CVaR minimization, first on an analytic quadratic profit family and then
//! on a small simulated ensemble with a constant-rate start set.

use riskflood::distrisk::{cvar_risk, RiskLevel, ScenarioDistribution};
use riskflood::ensemble::{generate, EnsembleSpec};
use riskflood::optimize::toys::QuadraticFamily;
use riskflood::optimize::{constant_starts, solve, EnsembleProfit, Objective, ProfitModel, SolverConfig};
use riskflood::resim::{EconomicParams, Grid, ReservoirModel, Well};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // psi(u, theta) = -|u - theta|^2 with three scenario optima.
    let toy = QuadraticFamily {
        thetas: vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![3.0, -1.0]],
        lb: vec![-2.0, -2.0],
        ub: vec![2.0, 2.0],
    };
    let config = SolverConfig { scale: 1.0, ..SolverConfig::default() };
    for (name, objective) in
        [("expected", Objective::Expected), ("CVaR_0.5", Objective::CVaR(0.5)), ("worst case", Objective::WorstCase)]
    {
        let r = solve(&toy, &objective, &config, &[vec![0.0, 0.0]])?;
        println!("toy {name:<10} u = {:.4?}  objective {:.5} ({})", r.u_opt, r.objective, r.termination);
    }

    let grid = Grid { nx: 9, ny: 9, dx: 10.0, dy: 10.0, h: 4.0 };
    let wells = vec![
        Well::injector("I1", (0, 0)),
        Well::injector("I2", (8, 8)),
        Well::producer("P1", (8, 0), 39.5e6),
        Well::producer("P2", (0, 8), 39.5e6),
    ];
    let base = ReservoirModel::homogeneous(grid, 1e-12, wells);
    let spec = EnsembleSpec {
        n_d: 5,
        seed: 3,
        log_mean: (1e-12f64).ln(),
        log_std: 0.8,
        corr_len: 2.0,
        corr_len_y: None,
        nx: 9,
        ny: 9,
    };
    let models = generate(&spec)?.models(&base)?;
    let econ = EconomicParams::default();
    let q_max = 4.0;
    let profit = EnsembleProfit::new(&models, &econ, vec![120.0; 4], q_max)?;
    let config = SolverConfig { max_iters: 10, ..SolverConfig::default() };
    let starts = constant_starts(&config.multistart_rates, profit.n_controls(), q_max);
    let alpha = 0.4;
    let r = solve(&profit, &Objective::CVaR(alpha), &config, &starts)?;
    let before = ScenarioDistribution::new(profit.profits(&starts[2])?)?;
    let after = ScenarioDistribution::new(profit.profits(&r.u_opt)?)?;
    let level = RiskLevel::new(alpha)?;
    println!(
        "ensemble CVaR_{alpha}: {:.0} USD at the constant start, {:.0} USD after {} iterations ({})",
        cvar_risk(&before, level),
        cvar_risk(&after, level),
        r.iterations,
        r.termination
    );
    let schedule = profit.schedule(&r.u_opt)?;
    for (k, rates) in schedule.rates.iter().enumerate() {
        println!("  step {k}: injector rates {rates:.3?}");
    }
    Ok(())
}
