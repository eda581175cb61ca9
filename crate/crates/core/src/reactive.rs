//! Reactive reference strategy: constant injection, producers shut in for
//! good once their water cut over the previous control step exceeded the
//! threshold.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distrisk::ScenarioDistribution;
use crate::resim::{check_ensemble, Diagnostics, EconomicParams, ReservoirModel, SimError, Simulator, StepRates};

/// Injection rate (m^3/day) of the reference strategy on the full-scale
/// bounds; scaled by `q_max / FULL_SCALE_Q_MAX` for other bounds.
pub const FULL_SCALE_RATE: f64 = 60.0;
pub const FULL_SCALE_Q_MAX: f64 = 79.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactivePolicy {
    /// Constant rate of every injector (m^3/day).
    pub injection_rate: f64,
    /// A producer is shut once its water cut exceeds this fraction.
    pub watercut_threshold: f64,
}

impl ReactivePolicy {
    /// Rate `60 q_max / 79.5` and the break-even water cut
    /// `r_o / (r_o + r_wP)`.
    pub fn standard(q_max: f64, econ: &EconomicParams) -> Self {
        Self {
            injection_rate: FULL_SCALE_RATE * q_max / FULL_SCALE_Q_MAX,
            watercut_threshold: econ.oil_price / (econ.oil_price + econ.water_production_cost),
        }
    }

    pub fn validate(&self, q_max: f64) -> Result<(), SimError> {
        if !(0.0..=q_max).contains(&self.injection_rate) {
            return Err(SimError::InvalidSchedule(format!(
                "reactive injection rate {} outside [0, {q_max}]",
                self.injection_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.watercut_threshold) {
            return Err(SimError::InvalidSchedule(format!(
                "water-cut threshold {} outside [0, 1]",
                self.watercut_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReactiveOutcome {
    pub npv: f64,
    /// Time (days) at which each producer was shut, if it was.
    pub shutin_times: Vec<Option<f64>>,
    /// Producer open flags used for each control step.
    pub open_history: Vec<Vec<bool>>,
    pub rates: Vec<StepRates>,
    pub diagnostics: Diagnostics,
}

/// Runs the policy over control steps of lengths `dt` (days). `q_max` is
/// the injector rate bound, which fixes the transport step size.
pub fn run_reactive(
    model: &ReservoirModel,
    econ: &EconomicParams,
    policy: &ReactivePolicy,
    dt: &[f64],
    q_max: f64,
) -> Result<ReactiveOutcome, SimError> {
    policy.validate(q_max)?;
    let n_inj = model.injector_count();
    let mut sim = Simulator::new(model, econ, q_max * n_inj as f64)?;
    let n_prod = sim.n_producers();
    let mut open = vec![true; n_prod];
    let mut shutin_times = vec![None; n_prod];
    let mut open_history = Vec::with_capacity(dt.len());
    let mut rates: Vec<StepRates> = Vec::with_capacity(dt.len());
    let mut forced = 0;
    for &step in dt {
        if let Some(prev) = rates.last() {
            for (j, r) in prev.producers.iter().enumerate() {
                if open[j] && r.water_cut() > policy.watercut_threshold {
                    open[j] = false;
                    shutin_times[j] = Some(sim.time());
                }
            }
        }
        let any_open = open.iter().any(|&o| o);
        let rate = if any_open { policy.injection_rate } else { 0.0 };
        if !any_open && policy.injection_rate > 0.0 {
            forced += 1;
        }
        open_history.push(open.clone());
        rates.push(sim.advance(step, &vec![rate; n_inj], &open)?);
    }
    let mut diagnostics = sim.diagnostics().clone();
    diagnostics.forced_shutdowns = forced;
    Ok(ReactiveOutcome { npv: sim.npv(), shutin_times, open_history, rates, diagnostics })
}

/// `psi(u_ref, theta_i)` for every member, in member order.
pub fn reference_distribution(
    models: &[ReservoirModel],
    econ: &EconomicParams,
    policy: &ReactivePolicy,
    dt: &[f64],
    q_max: f64,
) -> Result<ScenarioDistribution, SimError> {
    check_ensemble(models)?;
    let npvs = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| run_reactive(m, econ, policy, dt, q_max).map(|o| o.npv).map_err(|e| e.in_scenario(i)))
        .collect::<Result<Vec<f64>, SimError>>()?;
    ScenarioDistribution::new(npvs).map_err(|e| SimError::InvalidModel(e.to_string()))
}

/// Memoizes reference distributions keyed by every input that affects them.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    entries: Mutex<HashMap<u64, ScenarioDistribution>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(models: &[ReservoirModel], econ: &EconomicParams, policy: &ReactivePolicy, dt: &[f64], q_max: f64) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let json = serde_json::to_string(&(models, econ, policy, dt, q_max.to_bits())).expect("serializable inputs");
        json.hash(&mut h);
        h.finish()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(
        &self,
        models: &[ReservoirModel],
        econ: &EconomicParams,
        policy: &ReactivePolicy,
        dt: &[f64],
        q_max: f64,
    ) -> Result<ScenarioDistribution, SimError> {
        let key = Self::key(models, econ, policy, dt, q_max);
        if let Some(d) = self.entries.lock().expect("reference cache poisoned").get(&key) {
            return Ok(d.clone());
        }
        let d = reference_distribution(models, econ, policy, dt, q_max)?;
        self.entries.lock().expect("reference cache poisoned").insert(key, d.clone());
        Ok(d)
    }
}
