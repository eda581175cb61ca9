use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{OptError, ProfitJacobian, ProfitModel};
use crate::resim::{check_ensemble, ControlSchedule, EconomicParams, ReservoirModel, SimError, Simulator};

const PROFIT_CACHE_CAP: usize = 50_000;
const JACOBIAN_CACHE_CAP: usize = 2_000;

type Key = Vec<u64>;

#[derive(Default)]
struct Cache {
    profits: HashMap<Key, Arc<Vec<f64>>>,
    jacobians: HashMap<Key, Arc<ProfitJacobian>>,
}

/// NPV of a control schedule on every ensemble member. The flat control
/// vector is step-major (`u[k * n_inj + j]` is injector `j` during step
/// `k`), with bounds `[0, q_max]`.
///
/// Profits and Jacobians are memoized by the exact bits of `u`, so
/// strategies solved on one instance share evaluations at common iterates
/// (for example their multistart points).
pub struct EnsembleProfit<'a> {
    models: &'a [ReservoirModel],
    econ: &'a EconomicParams,
    dt: Vec<f64>,
    n_inj: usize,
    q_max: f64,
    cache: Mutex<Cache>,
}

fn key(u: &[f64]) -> Key {
    u.iter().map(|v| v.to_bits()).collect()
}

impl<'a> EnsembleProfit<'a> {
    pub fn new(
        models: &'a [ReservoirModel],
        econ: &'a EconomicParams,
        dt: Vec<f64>,
        q_max: f64,
    ) -> Result<Self, OptError> {
        check_ensemble(models)?;
        if dt.is_empty() || dt.iter().any(|d| !(*d > 0.0)) {
            return Err(OptError::InvalidProblem("control steps must have positive length".into()));
        }
        if !(q_max > 0.0) {
            return Err(OptError::InvalidProblem("q_max must be positive".into()));
        }
        let n_inj = models[0].injector_count();
        Ok(Self { models, econ, dt, n_inj, q_max, cache: Mutex::new(Cache::default()) })
    }

    pub fn models(&self) -> &[ReservoirModel] {
        self.models
    }

    pub fn econ(&self) -> &EconomicParams {
        self.econ
    }

    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn n_injectors(&self) -> usize {
        self.n_inj
    }

    pub fn schedule(&self, u: &[f64]) -> Result<ControlSchedule, OptError> {
        Ok(ControlSchedule::from_flat(u, &self.dt, self.n_inj, self.q_max)?)
    }

    fn check(&self, u: &[f64]) -> Result<(), OptError> {
        self.schedule(u).map(|_| ())
    }

    fn flux_bound(&self) -> f64 {
        self.q_max * self.n_inj as f64
    }

    fn member_npv(&self, model: &ReservoirModel, u: &[f64]) -> Result<f64, SimError> {
        let mut sim = Simulator::new(model, self.econ, self.flux_bound())?;
        let open = vec![true; sim.n_producers()];
        for (k, dt) in self.dt.iter().enumerate() {
            sim.advance(*dt, &u[k * self.n_inj..(k + 1) * self.n_inj], &open)?;
        }
        Ok(sim.npv())
    }

    /// Profit and one-sided difference quotients for one member. A
    /// perturbation of step `k` only changes the run from `t_k` on, so each
    /// perturbed run restarts from a snapshot taken before step `k`; the
    /// result is identical to rerunning from `t = 0`.
    fn member_jacobian(&self, model: &ReservoirModel, u: &[f64], fd_step: f64) -> Result<(f64, Vec<f64>), SimError> {
        let n = self.n_inj;
        let mut sim = Simulator::new(model, self.econ, self.flux_bound())?;
        let open = vec![true; sim.n_producers()];
        let mut snapshots = Vec::with_capacity(self.dt.len());
        for (k, dt) in self.dt.iter().enumerate() {
            snapshots.push(sim.clone());
            sim.advance(*dt, &u[k * n..(k + 1) * n], &open)?;
        }
        let base = sim.npv();
        let h0 = fd_step * self.q_max;
        let mut grad = vec![0.0; u.len()];
        for (k, snapshot) in snapshots.iter().enumerate() {
            for j in 0..n {
                let c = k * n + j;
                let h = if u[c] + h0 <= self.q_max { h0 } else { -h0 };
                let mut s = snapshot.clone();
                let mut row = u[k * n..(k + 1) * n].to_vec();
                row[j] += h;
                s.advance(self.dt[k], &row, &open)?;
                for m in k + 1..self.dt.len() {
                    s.advance(self.dt[m], &u[m * n..(m + 1) * n], &open)?;
                }
                grad[c] = (s.npv() - base) / h;
            }
        }
        Ok((base, grad))
    }

    fn remember_profits(&self, k: Key, p: Arc<Vec<f64>>) {
        let mut cache = self.cache.lock().expect("profit cache poisoned");
        if cache.profits.len() >= PROFIT_CACHE_CAP {
            cache.profits.clear();
        }
        cache.profits.insert(k, p);
    }

    /// Number of memoized profit vectors and Jacobians.
    pub fn cache_sizes(&self) -> (usize, usize) {
        let cache = self.cache.lock().expect("profit cache poisoned");
        (cache.profits.len(), cache.jacobians.len())
    }
}

impl ProfitModel for EnsembleProfit<'_> {
    fn n_controls(&self) -> usize {
        self.dt.len() * self.n_inj
    }

    fn n_scenarios(&self) -> usize {
        self.models.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.n_controls()], vec![self.q_max; self.n_controls()])
    }

    fn profits(&self, u: &[f64]) -> Result<Vec<f64>, OptError> {
        self.check(u)?;
        let k = key(u);
        if let Some(p) = self.cache.lock().expect("profit cache poisoned").profits.get(&k) {
            return Ok(p.as_ref().clone());
        }
        let profits = self
            .models
            .par_iter()
            .enumerate()
            .map(|(i, m)| self.member_npv(m, u).map_err(|e| e.in_scenario(i)))
            .collect::<Result<Vec<f64>, SimError>>()?;
        self.remember_profits(k, Arc::new(profits.clone()));
        Ok(profits)
    }

    fn jacobian(&self, u: &[f64], fd_step: f64) -> Result<ProfitJacobian, OptError> {
        self.check(u)?;
        let k = key(u);
        if let Some(j) = self.cache.lock().expect("profit cache poisoned").jacobians.get(&k) {
            return Ok(ProfitJacobian { profits: j.profits.clone(), rows: j.rows.clone() });
        }
        let members = self
            .models
            .par_iter()
            .enumerate()
            .map(|(i, m)| self.member_jacobian(m, u, fd_step).map_err(|e| e.in_scenario(i)))
            .collect::<Result<Vec<_>, SimError>>()?;
        let (profits, rows): (Vec<f64>, Vec<Vec<f64>>) = members.into_iter().unzip();
        self.remember_profits(k.clone(), Arc::new(profits.clone()));
        let mut cache = self.cache.lock().expect("profit cache poisoned");
        if cache.jacobians.len() >= JACOBIAN_CACHE_CAP {
            cache.jacobians.clear();
        }
        cache.jacobians.insert(k, Arc::new(ProfitJacobian { profits: profits.clone(), rows: rows.clone() }));
        Ok(ProfitJacobian { profits, rows })
    }
}
