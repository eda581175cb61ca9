use riskflood::reactive::{reference_distribution, run_reactive, ReactivePolicy, ReferenceCache};
use riskflood::resim::{simulate, ControlSchedule, EconomicParams, Grid, ReservoirModel, Well};

const Q_MAX: f64 = 4.0;

fn grid() -> Grid {
    Grid { nx: 9, ny: 9, dx: 8.0, dy: 8.0, h: 4.0 }
}

fn one_producer() -> ReservoirModel {
    let wells = vec![Well::injector("I1", (0, 0)), Well::injector("I2", (8, 8)), Well::producer("P1", (4, 4), 39.5e6)];
    ReservoirModel::homogeneous(grid(), 1e-12, wells)
}

fn two_producers(phase: f64) -> ReservoirModel {
    let wells = vec![
        Well::injector("I1", (0, 0)),
        Well::injector("I2", (8, 0)),
        Well::producer("P1", (2, 7), 39.5e6),
        Well::producer("P2", (6, 6), 39.5e6),
    ];
    let perm = (0..81)
        .map(|c| {
            let (i, j) = ((c % 9) as f64, (c / 9) as f64);
            1e-12 * (0.6 * (0.7 * i + phase).sin() * (0.4 * j + 2.0 * phase).cos()).exp()
        })
        .collect();
    ReservoirModel::homogeneous(grid(), 1e-12, wells).with_perm(perm)
}

fn dt() -> Vec<f64> {
    vec![60.0; 12]
}

fn policy(threshold: f64) -> ReactivePolicy {
    ReactivePolicy { injection_rate: 3.0, watercut_threshold: threshold }
}

#[test]
fn unit_threshold_matches_constant_schedule() {
    let econ = EconomicParams::default();
    for model in [one_producer(), two_producers(0.4)] {
        let out = run_reactive(&model, &econ, &policy(1.0), &dt(), Q_MAX).unwrap();
        assert!(out.shutin_times.iter().all(Option::is_none));
        let schedule = ControlSchedule::constant(12, 60.0, model.injector_count(), 3.0, Q_MAX).unwrap();
        let sim = simulate(&model, &econ, &schedule).unwrap();
        assert_eq!(out.npv, sim.npv);
        assert_eq!(out.rates, sim.rates);
    }
}

#[test]
fn zero_threshold_shuts_at_first_water() {
    let econ = EconomicParams::default();
    let model = two_producers(1.1);
    let out = run_reactive(&model, &econ, &policy(0.0), &dt(), Q_MAX).unwrap();
    assert!(out.shutin_times.iter().any(Option::is_some));
    for j in 0..2 {
        let first_wet = out.rates.iter().position(|r| r.producers[j].water_cut() > 0.0);
        match (first_wet, out.shutin_times[j]) {
            (Some(k), Some(t)) => assert_eq!(t, out.rates[k].t_end),
            (None, None) => {}
            (Some(k), None) => assert_eq!(k, out.rates.len() - 1, "wet producer {j} never shut"),
            (None, Some(t)) => panic!("producer {j} shut at {t} without water"),
        }
    }
}

#[test]
fn open_history_is_monotone_and_consistent() {
    let econ = EconomicParams::default();
    let out = run_reactive(&two_producers(0.2), &econ, &policy(0.5), &dt(), Q_MAX).unwrap();
    assert_eq!(out.open_history.len(), 12);
    for w in out.open_history.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| *a || !*b), "reopened producer");
    }
    for (k, open) in out.open_history.iter().enumerate() {
        for (j, &o) in open.iter().enumerate() {
            let r = out.rates[k].producers[j];
            if !o {
                assert_eq!((r.q_o, r.q_w), (0.0, 0.0));
            }
            let t_start = out.rates[k].t_end - out.rates[k].dt;
            assert_eq!(o, out.shutin_times[j].is_none_or(|t| t > t_start));
        }
    }
}

#[test]
fn single_producer_shutin_time_grows_with_threshold() {
    let econ = EconomicParams::default();
    let model = one_producer();
    let mut last = 0.0;
    for threshold in [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95] {
        let out = run_reactive(&model, &econ, &policy(threshold), &dt(), Q_MAX).unwrap();
        let t = out.shutin_times[0].unwrap_or(f64::INFINITY);
        assert!(t >= last, "threshold {threshold}: shut at {t} before {last}");
        last = t;
    }
    assert!(last > 0.0);
}

#[test]
fn closing_every_producer_stops_injection() {
    let econ = EconomicParams::default();
    let out = run_reactive(&one_producer(), &econ, &policy(0.0), &dt(), Q_MAX).unwrap();
    let t = out.shutin_times[0].expect("producer floods within the horizon");
    let closed: Vec<_> = out.rates.iter().filter(|r| r.t_end > t).collect();
    assert!(!closed.is_empty());
    assert_eq!(out.diagnostics.forced_shutdowns, closed.len());
    for r in closed {
        assert!(r.injectors.iter().all(|&q| q == 0.0));
        assert_eq!(r.cash_flow, 0.0);
    }
    let none = run_reactive(&one_producer(), &econ, &policy(1.0), &dt(), Q_MAX).unwrap();
    assert_eq!(none.diagnostics.forced_shutdowns, 0);
}

#[test]
fn reference_distribution_follows_member_order() {
    let econ = EconomicParams::default();
    let models: Vec<_> = [0.1, 0.9, 1.7, 2.5].iter().map(|&p| two_producers(p)).collect();
    let p = policy(126.0 / 145.0);
    let d = reference_distribution(&models, &econ, &p, &dt(), Q_MAX).unwrap();
    for (m, v) in models.iter().zip(d.outcomes()) {
        assert_eq!(run_reactive(m, &econ, &p, &dt(), Q_MAX).unwrap().npv, *v);
    }
    let order = [2, 0, 3, 1];
    let permuted: Vec<_> = order.iter().map(|&i| models[i].clone()).collect();
    let dp = reference_distribution(&permuted, &econ, &p, &dt(), Q_MAX).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(dp.outcomes()[k], d.outcomes()[i]);
    }

    let single = reference_distribution(&models[..1], &econ, &p, &dt(), Q_MAX).unwrap();
    assert_eq!(single.outcomes(), &d.outcomes()[..1]);
}

#[test]
fn cache_reuses_identical_inputs() {
    let econ = EconomicParams::default();
    let models: Vec<_> = [0.3, 1.3].iter().map(|&p| two_producers(p)).collect();
    let cache = ReferenceCache::new();
    assert!(cache.is_empty());
    let a = cache.get_or_compute(&models, &econ, &policy(0.8), &dt(), Q_MAX).unwrap();
    let b = cache.get_or_compute(&models, &econ, &policy(0.8), &dt(), Q_MAX).unwrap();
    assert_eq!(a, b);
    assert_eq!(cache.len(), 1);
    cache.get_or_compute(&models, &econ, &policy(0.7), &dt(), Q_MAX).unwrap();
    assert_eq!(cache.len(), 2);
    let cheaper = EconomicParams { oil_price: 100.0, ..econ };
    let c = cache.get_or_compute(&models, &cheaper, &policy(0.8), &dt(), Q_MAX).unwrap();
    assert_ne!(a, c);
    assert_eq!(cache.len(), 3);
}

#[test]
fn invalid_policy_rejected() {
    let econ = EconomicParams::default();
    let p = ReactivePolicy { injection_rate: Q_MAX + 1.0, watercut_threshold: 0.5 };
    assert!(run_reactive(&one_producer(), &econ, &p, &dt(), Q_MAX).is_err());
    assert!(reference_distribution(&[], &econ, &policy(0.5), &dt(), Q_MAX).is_err());
}
