//! Runs the reactive reference policy (constant injection, producers shut
//! in once uneconomic) on a small heterogeneous ensemble and prints the
//! shut-in times and the reference NPV distribution.

use riskflood::ensemble::{generate, EnsembleSpec};
use riskflood::reactive::{run_reactive, ReactivePolicy, ReferenceCache};
use riskflood::resim::{EconomicParams, Grid, ReservoirModel, Well};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid { nx: 15, ny: 15, dx: 8.0, dy: 8.0, h: 4.0 };
    let wells = vec![
        Well::injector("I1", (0, 0)),
        Well::injector("I2", (14, 0)),
        Well::injector("I3", (0, 14)),
        Well::injector("I4", (14, 14)),
        Well::producer("P1", (7, 4), 39.5e6),
        Well::producer("P2", (7, 10), 39.5e6),
    ];
    let base = ReservoirModel::homogeneous(grid, 1e-12, wells);
    let spec = EnsembleSpec {
        n_d: 6,
        seed: 11,
        log_mean: (1e-12f64).ln(),
        log_std: 0.8,
        corr_len: 2.5,
        corr_len_y: Some(5.0),
        nx: 15,
        ny: 15,
    };
    let models = generate(&spec)?.models(&base)?;
    let econ = EconomicParams::default();
    let q_max = 4.0;
    let policy = ReactivePolicy::standard(q_max, &econ);
    let dt = vec![90.0; 8];
    println!(
        "policy: {:.3} m3/day per injector, shut-in above water cut {:.3}",
        policy.injection_rate, policy.watercut_threshold
    );

    println!("member        NPV   P1 shut (day)   P2 shut (day)");
    for (i, m) in models.iter().enumerate() {
        let o = run_reactive(m, &econ, &policy, &dt, q_max)?;
        let t = |j: usize| o.shutin_times[j].map_or("-".to_string(), |t| format!("{t:.0}"));
        println!("{i:>6} {:>10.0} {:>15} {:>15}", o.npv, t(0), t(1));
    }

    let cache = ReferenceCache::new();
    let d = cache.get_or_compute(&models, &econ, &policy, &dt, q_max)?;
    let again = cache.get_or_compute(&models, &econ, &policy, &dt, q_max)?;
    assert_eq!(d, again);
    println!("reference mean {:.0} USD, worst {:.0} USD ({} cached entry)", d.mean(), d.min(), cache.len());
    Ok(())
}
