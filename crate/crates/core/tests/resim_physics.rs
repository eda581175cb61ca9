use approx::assert_relative_eq;
use riskflood::resim::{
    npv_distribution, simulate, ControlSchedule, EconomicParams, Grid, ReservoirModel, SimError, Well,
};

fn desk_grid() -> Grid {
    Grid { nx: 15, ny: 15, dx: 8.0, dy: 8.0, h: 4.0 }
}

fn corner_injectors() -> Vec<Well> {
    vec![
        Well::injector("I1", (0, 0)),
        Well::injector("I2", (14, 0)),
        Well::injector("I3", (0, 14)),
        Well::injector("I4", (14, 14)),
    ]
}

fn two_producer_model() -> ReservoirModel {
    let mut wells = corner_injectors();
    wells.push(Well::producer("P1", (7, 4), 39.5e6));
    wells.push(Well::producer("P2", (7, 10), 39.5e6));
    ReservoirModel::homogeneous(desk_grid(), 1e-12, wells)
}

/// Smooth lognormal-looking field without using the ensemble module.
fn patterned_perm(nx: usize, ny: usize, phase: f64) -> Vec<f64> {
    (0..nx * ny)
        .map(|c| {
            let (i, j) = ((c % nx) as f64, (c / nx) as f64);
            1e-12 * (0.7 * (0.5 * i + phase).sin() * (0.3 * j - phase).cos()).exp()
        })
        .collect()
}

fn varied_schedule(n_steps: usize, dt: f64, q_max: f64) -> ControlSchedule {
    let rates = (0..n_steps)
        .map(|k| (0..4).map(|w| q_max * (0.25 + 0.7 * (((k * 7 + w * 3) % 10) as f64 / 10.0))).collect())
        .collect();
    ControlSchedule::new(vec![dt; n_steps], rates, q_max).unwrap()
}

fn oil_in_place(model: &ReservoirModel, sw: &[f64]) -> f64 {
    sw.iter().map(|s| model.pore_volume() * (1.0 - s)).sum()
}

#[test]
fn conservation_over_forty_step_run() {
    let model = two_producer_model().with_perm(patterned_perm(15, 15, 0.3));
    let econ = EconomicParams::default();
    let out = simulate(&model, &econ, &varied_schedule(40, 18.0, 4.0)).unwrap();
    let d = &out.diagnostics;
    assert!(d.max_mass_balance_residual < 1e-8, "mass balance residual {}", d.max_mass_balance_residual);
    assert!(d.max_pressure_residual <= 1e-10);

    let (swc, s_max) = (model.corey.swc, 1.0 - model.corey.sor);
    assert!(d.min_saturation >= swc - 1e-12 && d.max_saturation <= s_max + 1e-12);
    assert_eq!(d.clamped_cells, 0);
    for s in &out.states {
        assert!(s.sw.iter().all(|&v| v >= swc - 1e-12 && v <= s_max + 1e-12));
    }

    let initial = oil_in_place(&model, &out.states[0].sw);
    let remaining = oil_in_place(&model, &out.states.last().unwrap().sw);
    assert_relative_eq!(out.volumes.oil_produced, initial - remaining, max_relative = 1e-6);
    let injected: f64 = out.rates.iter().map(|r| r.dt * r.injectors.iter().sum::<f64>()).sum();
    let produced = out.volumes.oil_produced + out.volumes.water_produced;
    assert_relative_eq!(produced, injected, max_relative = 1e-8);
}

#[test]
fn injector_rates_follow_schedule_and_producers_are_nonnegative() {
    let model = two_producer_model();
    let schedule = varied_schedule(6, 60.0, 4.0);
    let out = simulate(&model, &EconomicParams::default(), &schedule).unwrap();
    for (r, u) in out.rates.iter().zip(&schedule.rates) {
        for (a, b) in r.injectors.iter().zip(u) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        assert!(r.producers.iter().all(|p| p.q_o >= 0.0 && p.q_w >= 0.0));
    }
}

#[test]
fn four_fold_symmetry() {
    let mut wells = corner_injectors();
    wells.push(Well::producer("P", (7, 7), 39.5e6));
    let model = ReservoirModel::homogeneous(desk_grid(), 1e-12, wells);
    let schedule = ControlSchedule::new(vec![90.0; 6], (0..6).map(|k| vec![1.0 + 0.5 * k as f64; 4]).collect(), 4.0)
        .unwrap();
    let out = simulate(&model, &EconomicParams::default(), &schedule).unwrap();
    let n = 15;
    for state in &out.states {
        let sw = |i: usize, j: usize| state.sw[j * n + i];
        for j in 0..n {
            for i in 0..n {
                let v = sw(i, j);
                for w in [sw(n - 1 - i, j), sw(i, n - 1 - j), sw(j, i)] {
                    assert!((v - w).abs() <= 1e-10, "asymmetry {} at ({i},{j})", (v - w).abs());
                }
            }
        }
    }
}

#[test]
fn npv_matches_cash_flow_accounting() {
    let econ = EconomicParams::default();
    assert_eq!(90.0 * (126.0 * 10.0 - 19.0 * 2.0 - 6.0 * 12.0), 103_500.0);
    assert_relative_eq!(econ.cash_flow(900.0, 180.0, 1080.0), 103_500.0, max_relative = 1e-15);

    let discounted = EconomicParams { discount: 0.1, ..econ.clone() };
    let model = two_producer_model();
    let out = simulate(&model, &discounted, &varied_schedule(8, 90.0, 4.0)).unwrap();
    let mut npv = 0.0;
    for r in &out.rates {
        let oil: f64 = r.producers.iter().map(|p| p.q_o).sum();
        let water: f64 = r.producers.iter().map(|p| p.q_w).sum();
        let inj: f64 = r.injectors.iter().sum();
        npv += r.dt * (126.0 * oil - 19.0 * water - 6.0 * inj) / 1.1f64.powf(r.t_end / 365.0);
    }
    assert_relative_eq!(out.npv, npv, max_relative = 1e-9);
}

#[test]
fn no_injection_at_equilibrium_gives_zero() {
    let mut wells = corner_injectors();
    wells.push(Well::producer("P1", (7, 4), 40e6));
    wells.push(Well::producer("P2", (7, 10), 40e6));
    let model = ReservoirModel::homogeneous(desk_grid(), 1e-12, wells);
    let schedule = ControlSchedule::constant(4, 90.0, 4, 0.0, 4.0).unwrap();
    let out = simulate(&model, &EconomicParams::default(), &schedule).unwrap();
    assert_eq!(out.npv, 0.0);
    for r in &out.rates {
        assert!(r.producers.iter().all(|p| p.q_o.abs() < 1e-12 && p.q_w.abs() < 1e-12));
    }
}

#[test]
fn npv_is_monotone_in_oil_price() {
    let model = two_producer_model().with_perm(patterned_perm(15, 15, 1.0));
    let schedule = varied_schedule(8, 90.0, 4.0);
    let low = simulate(&model, &EconomicParams::default(), &schedule).unwrap();
    let high = simulate(&model, &EconomicParams { oil_price: 150.0, ..EconomicParams::default() }, &schedule).unwrap();
    assert_eq!(low.volumes, high.volumes);
    assert!(high.npv >= low.npv);
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let model = two_producer_model().with_perm(patterned_perm(15, 15, 2.0));
    let schedule = varied_schedule(8, 90.0, 4.0);
    let econ = EconomicParams::default();
    let a = simulate(&model, &econ, &schedule).unwrap();
    let b = simulate(&model, &econ, &schedule).unwrap();
    assert_eq!(a.npv.to_bits(), b.npv.to_bits());
    assert_eq!(a.states, b.states);
    assert_eq!(a.rates, b.rates);
}

#[test]
fn ensemble_distribution_matches_member_runs() {
    let base = two_producer_model();
    let models: Vec<_> = (0..5).map(|i| base.with_perm(patterned_perm(15, 15, i as f64 * 0.7))).collect();
    let econ = EconomicParams::default();
    let schedule = varied_schedule(4, 90.0, 4.0);
    let d = npv_distribution(&models, &econ, &schedule).unwrap();
    for (m, v) in models.iter().zip(d.outcomes()) {
        assert_eq!(simulate(m, &econ, &schedule).unwrap().npv.to_bits(), v.to_bits());
    }

    let dup = vec![models[1].clone(), models[3].clone(), models[1].clone()];
    let d = npv_distribution(&dup, &econ, &schedule).unwrap();
    assert_eq!(d.outcomes()[0].to_bits(), d.outcomes()[2].to_bits());

    let single = npv_distribution(&models[..1], &econ, &schedule).unwrap();
    assert_eq!(single.len(), 1);
}

#[test]
fn ensemble_errors_carry_scenario_index() {
    let base = two_producer_model();
    let mut bad = base.clone();
    bad.max_substeps = 1;
    let models = vec![base.clone(), base, bad];
    let err = npv_distribution(&models, &EconomicParams::default(), &varied_schedule(2, 90.0, 4.0)).unwrap_err();
    match err {
        SimError::Scenario { index, source } => {
            assert_eq!(index, 2);
            assert!(matches!(*source, SimError::TransportFailed { .. }));
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn injecting_without_open_producer_is_singular() {
    let model = ReservoirModel::homogeneous(desk_grid(), 1e-12, corner_injectors());
    let schedule = ControlSchedule::constant(1, 10.0, 4, 1.0, 4.0).unwrap();
    assert!(matches!(
        simulate(&model, &EconomicParams::default(), &schedule),
        Err(SimError::PressureSingular) | Err(SimError::InvalidModel(_))
    ));
}

/// Buckley-Leverett solution for water displacing oil at connate
/// saturation: shock saturation, and the profile as a function of
/// `xi / tau` (distance over injected volume per unit area and porosity).
fn buckley_leverett(model: &ReservoirModel) -> (f64, impl Fn(f64) -> f64) {
    let props = model.flow_properties();
    let swc = model.corey.swc;
    let s_max = 1.0 - model.corey.sor;
    let front = model.flow_properties();
    let f = move |s: f64| props.fractional_flow(s);
    let slope = move |s: f64| {
        let h = 1e-7;
        (f(s + h) - f(s - h)) / (2.0 * h)
    };
    let bisect = |g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
        let up = g(hi) > 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == up {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    // Tangent from (swc, 0): f(s) / (s - swc) = f'(s).
    let s_front = bisect(&|s| front.fractional_flow(s) / (s - swc) - slope(s), swc + 1e-3, s_max - 1e-6);
    let speed = slope(s_front);
    let profile = move |v: f64| {
        if v >= speed {
            swc
        } else if v <= slope(s_max - 1e-9) {
            s_max
        } else {
            bisect(&|s| slope(s) - v, s_front, s_max - 1e-9)
        }
    };
    (speed, profile)
}

#[test]
fn saturation_profile_converges_to_buckley_leverett_under_refinement() {
    let length = 200.0;
    let q = 4.0;
    let mut errors = Vec::new();
    for nx in [25, 50, 100, 200] {
        let dx = length / nx as f64;
        let grid = Grid { nx, ny: 1, dx, dy: 10.0, h: 4.0 };
        let wells = vec![Well::injector("I", (0, 0)), Well::producer("P", (nx - 1, 0), 39.5e6)];
        let mut model = ReservoirModel::homogeneous(grid, 1e-12, wells);
        model.sw_init = model.corey.swc;
        model.max_substeps = 1_000_000;
        let (speed, profile) = buckley_leverett(&model);
        let area_phi = 10.0 * 4.0 * model.porosity;
        let t = 0.6 * length * area_phi / (speed * q);
        let tau = q * t / area_phi;
        let schedule = ControlSchedule::constant(1, t, 1, q, q).unwrap();
        let out = simulate(&model, &EconomicParams::default(), &schedule).unwrap();
        let sw = &out.states.last().unwrap().sw;
        // Distance from the injector's cell center; the injector cell itself is skipped.
        let l1: f64 = (1..nx).map(|c| (sw[c] - profile(c as f64 * dx / tau)).abs() * dx).sum();
        errors.push(l1);
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "profile errors not decreasing: {errors:?}");
    }
    assert!(errors[3] < 0.5 * errors[0], "{errors:?}");
}
