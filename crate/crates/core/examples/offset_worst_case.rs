//! Maximizes the worst profit offset against the reactive reference on a
//! small ensemble and compares offsets with the expected-profit optimum.

use riskflood::distrisk::{offset_distribution, offset_kpis, ScenarioDistribution};
use riskflood::ensemble::{generate, EnsembleSpec};
use riskflood::optimize::{constant_starts, solve, EnsembleProfit, Objective, ProfitModel, SolverConfig};
use riskflood::reactive::{reference_distribution, ReactivePolicy};
use riskflood::resim::{EconomicParams, Grid, ReservoirModel, Well};

fn main() -> Result<(), Box<dyn std::error::Error>> {
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
        seed: 5,
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
    let dt = vec![120.0; 4];
    let policy = ReactivePolicy::standard(q_max, &econ);
    let reference = reference_distribution(&models, &econ, &policy, &dt, q_max)?;

    let profit = EnsembleProfit::new(&models, &econ, dt, q_max)?;
    let config = SolverConfig { max_iters: 8, ..SolverConfig::default() };
    let starts = constant_starts(&config.multistart_rates, profit.n_controls(), q_max);
    let offset = Objective::OffsetWorstCase { reference: reference.outcomes().to_vec() };

    println!("strategy      mean offset   worst offset   beta");
    for (name, objective) in [("expected", Objective::Expected), ("offset w.c.", offset)] {
        let r = solve(&profit, &objective, &config, &starts)?;
        let d = ScenarioDistribution::new(profit.profits(&r.u_opt)?)?;
        let k = offset_kpis(&offset_distribution(&d, &reference)?)?;
        println!("{name:<12} {:>12.0} {:>14.0} {:>6.2}", k.mean, k.worst, k.beta);
    }
    Ok(())
}
