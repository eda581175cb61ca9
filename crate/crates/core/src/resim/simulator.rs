//! Sequential implicit-pressure / explicit-saturation time stepping.
//!
//! Each control step is split into `pressure_steps` equal intervals. Per
//! interval the TPFA pressure equation is solved with total mobility frozen
//! at the current saturation, then the saturation is advanced with
//! first-order upwind substeps under a Courant limit.
//!
//! The Courant limit uses the injection capacity `n_inj * q_max` as a bound
//! on the throughput of any cell (in potential flow no cell passes more
//! volume than is injected). The substep count therefore does not depend on
//! the actual rates, which keeps the NPV a smooth function of the controls
//! for finite-difference gradients.

use rayon::prelude::*;

use super::linalg::{relative_residual, BandedSpd};
use super::model::{
    well_index, ControlSchedule, EconomicParams, FlowProperties, ReservoirModel, WellKind, SECONDS_PER_DAY,
};
use super::SimError;
use crate::distrisk::ScenarioDistribution;

/// Largest accepted relative residual of a pressure solve.
pub const PRESSURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Cell pressures (Pa).
    pub pressure: Vec<f64>,
    /// Cell water saturations.
    pub sw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProducerRates {
    /// Oil rate (m^3/day), averaged over the control step.
    pub q_o: f64,
    /// Water rate (m^3/day), averaged over the control step.
    pub q_w: f64,
}

impl ProducerRates {
    pub fn water_cut(&self) -> f64 {
        let total = self.q_o + self.q_w;
        if total > 0.0 {
            self.q_w / total
        } else {
            0.0
        }
    }
}

/// Well rates and cash flow of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRates {
    pub dt: f64,
    /// End time of the step `t_{k+1}` (days).
    pub t_end: f64,
    pub producers: Vec<ProducerRates>,
    /// Injector rates (m^3/day).
    pub injectors: Vec<f64>,
    pub cash_flow: f64,
    pub discounted_cash_flow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Volumes {
    pub oil_produced: f64,
    pub water_produced: f64,
    pub water_injected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub pressure_solves: usize,
    pub transport_substeps: usize,
    /// Largest `|sum q_inj - sum q_prod| / max(sum q_inj, eps)` over all solves.
    pub max_mass_balance_residual: f64,
    pub max_pressure_residual: f64,
    pub min_saturation: f64,
    pub max_saturation: f64,
    /// Saturation values found outside `[swc, 1 - sor]` after a substep
    /// (rel-perm evaluation clamps them).
    pub clamped_cells: usize,
    /// Number of pressure intervals in which injection was dropped because
    /// every producer was shut.
    pub forced_shutdowns: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            pressure_solves: 0,
            transport_substeps: 0,
            max_mass_balance_residual: 0.0,
            max_pressure_residual: 0.0,
            min_saturation: f64::INFINITY,
            max_saturation: f64::NEG_INFINITY,
            clamped_cells: 0,
            forced_shutdowns: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub npv: f64,
    pub rates: Vec<StepRates>,
    /// Initial state followed by the state after each control step.
    pub states: Vec<SimState>,
    pub volumes: Volumes,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
struct Face {
    a: usize,
    b: usize,
    trans: f64,
}

#[derive(Debug, Clone, Copy)]
struct ProducerSlot {
    cell: usize,
    wi: f64,
    /// `bhp - p_ref` (Pa).
    bhp_offset: f64,
}

/// Reservoir state advanced one control step at a time. Producers can be
/// shut between steps, which the reactive policy relies on.
#[derive(Clone)]
pub struct Simulator<'m> {
    model: &'m ReservoirModel,
    econ: &'m EconomicParams,
    props: FlowProperties,
    faces: Vec<Face>,
    injector_cells: Vec<usize>,
    producers: Vec<ProducerSlot>,
    p_ref: f64,
    pore_volume: f64,
    /// Bound on `df_w/ds_w`.
    slope: f64,
    /// Courant-limited transport step (days).
    dt_transport: f64,
    sw: Vec<f64>,
    pressure: Vec<f64>,
    time: f64,
    npv: f64,
    volumes: Volumes,
    diagnostics: Diagnostics,
}

impl<'m> Simulator<'m> {
    /// `flux_bound` is the injection capacity (m^3/day) used for the Courant
    /// limit; it must bound the total injection rate at every step.
    pub fn new(model: &'m ReservoirModel, econ: &'m EconomicParams, flux_bound: f64) -> Result<Self, SimError> {
        model.validate()?;
        econ.validate()?;
        let g = &model.grid;
        let mut faces = Vec::with_capacity(2 * g.n_cells());
        let harmonic = |k1: f64, k2: f64| 2.0 / (1.0 / k1 + 1.0 / k2);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.cell_index(i, j);
                if i + 1 < g.nx {
                    let k = harmonic(model.perm[c], model.perm[c + 1]);
                    faces.push(Face { a: c, b: c + 1, trans: k * g.dy * g.h / g.dx });
                }
                if j + 1 < g.ny {
                    let k = harmonic(model.perm[c], model.perm[c + g.nx]);
                    faces.push(Face { a: c, b: c + g.nx, trans: k * g.dx * g.h / g.dy });
                }
            }
        }
        let mut injector_cells = Vec::new();
        let mut producers = Vec::new();
        let mut p_ref = None;
        for w in &model.wells {
            let cell = model.well_cell(w);
            match w.kind {
                WellKind::Injector => injector_cells.push(cell),
                WellKind::Producer { bhp } => {
                    let p_ref = *p_ref.get_or_insert(bhp);
                    producers.push(ProducerSlot { cell, wi: well_index(model, w)?, bhp_offset: bhp - p_ref });
                }
            }
        }
        let props = model.flow_properties();
        let pore_volume = model.pore_volume();
        let slope = props.max_fractional_flow_slope();
        let dt_transport = if flux_bound > 0.0 { model.cfl * pore_volume / (slope * flux_bound) } else { f64::INFINITY };
        let n = g.n_cells();
        Ok(Self {
            model,
            econ,
            props,
            faces,
            injector_cells,
            producers,
            p_ref: p_ref.unwrap_or(model.p_init),
            pore_volume,
            slope,
            dt_transport,
            sw: vec![model.initial_saturation(); n],
            pressure: vec![model.p_init; n],
            time: 0.0,
            npv: 0.0,
            volumes: Volumes::default(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn state(&self) -> SimState {
        SimState { pressure: self.pressure.clone(), sw: self.sw.clone() }
    }

    pub fn npv(&self) -> f64 {
        self.npv
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn volumes(&self) -> Volumes {
        self.volumes
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn n_injectors(&self) -> usize {
        self.injector_cells.len()
    }

    pub fn n_producers(&self) -> usize {
        self.producers.len()
    }

    /// Oil volume currently in place (m^3).
    pub fn oil_in_place(&self) -> f64 {
        self.sw.iter().map(|s| self.pore_volume * (1.0 - s)).sum()
    }

    /// Advances one control step of length `dt` (days) with the given
    /// injector rates; `open[j]` says whether producer `j` is on stream.
    pub fn advance(&mut self, dt: f64, injection: &[f64], open: &[bool]) -> Result<StepRates, SimError> {
        if injection.len() != self.injector_cells.len() || open.len() != self.producers.len() {
            return Err(SimError::InvalidSchedule(format!(
                "{} rates / {} producer flags for {} injectors / {} producers",
                injection.len(),
                open.len(),
                self.injector_cells.len(),
                self.producers.len()
            )));
        }
        let mut oil = vec![0.0; self.producers.len()];
        let mut water = vec![0.0; self.producers.len()];
        let mut injected = vec![0.0; self.injector_cells.len()];
        let interval = dt / self.model.pressure_steps as f64;
        let mut budget = self.model.max_substeps;
        for _ in 0..self.model.pressure_steps {
            budget -= self.pressure_interval(interval, injection, open, budget, &mut oil, &mut water, &mut injected)?;
        }
        self.time += dt;
        let (o, w, i): (f64, f64, f64) = (oil.iter().sum(), water.iter().sum(), injected.iter().sum());
        self.volumes.oil_produced += o;
        self.volumes.water_produced += w;
        self.volumes.water_injected += i;
        let cash_flow = self.econ.cash_flow(o, w, i);
        let discounted_cash_flow = cash_flow * self.econ.discount_factor(self.time);
        self.npv += discounted_cash_flow;
        Ok(StepRates {
            dt,
            t_end: self.time,
            producers: oil.iter().zip(&water).map(|(o, w)| ProducerRates { q_o: o / dt, q_w: w / dt }).collect(),
            injectors: injected.iter().map(|v| v / dt).collect(),
            cash_flow,
            discounted_cash_flow,
        })
    }

    fn pressure_interval(
        &mut self,
        dt: f64,
        injection: &[f64],
        open: &[bool],
        budget: usize,
        oil: &mut [f64],
        water: &mut [f64],
        injected: &mut [f64],
    ) -> Result<usize, SimError> {
        let n = self.sw.len();
        let total_injection: f64 = injection.iter().sum();
        if !open.iter().any(|&o| o) {
            if total_injection > 0.0 {
                return Err(SimError::PressureSingular);
            }
            return Ok(0);
        }

        let lambda: Vec<f64> = self.sw.iter().map(|&s| self.props.total_mobility(s)).collect();
        let mut a = BandedSpd::zeros(n, self.model.grid.nx);
        let mut rhs = vec![0.0; n];
        let mut face_coef = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let c = f.trans * 0.5 * (lambda[f.a] + lambda[f.b]);
            a.add(f.a, f.a, c);
            a.add(f.b, f.b, c);
            a.add(f.a, f.b, -c);
            face_coef.push(c);
        }
        let mut prod_coef = vec![0.0; self.producers.len()];
        for (j, p) in self.producers.iter().enumerate() {
            if open[j] {
                let c = p.wi * lambda[p.cell];
                a.add(p.cell, p.cell, c);
                rhs[p.cell] += c * p.bhp_offset;
                prod_coef[j] = c;
            }
        }
        for (&cell, &q) in self.injector_cells.iter().zip(injection) {
            rhs[cell] += q / SECONDS_PER_DAY;
        }
        let chol = a.cholesky().ok_or(SimError::PressureSingular)?;
        let p = chol.solve(&rhs);
        let residual = relative_residual(&a, &p, &rhs);
        let d = &mut self.diagnostics;
        d.pressure_solves += 1;
        d.max_pressure_residual = d.max_pressure_residual.max(residual);
        if residual > PRESSURE_TOLERANCE {
            return Err(SimError::PressureAccuracy { residual });
        }

        // Fluxes in m^3/day, positive from a to b; producer rates positive out.
        let mut upwind = Vec::with_capacity(self.faces.len());
        let mut outflow = vec![0.0; n];
        for (f, c) in self.faces.iter().zip(&face_coef) {
            let q = c * (p[f.a] - p[f.b]) * SECONDS_PER_DAY;
            let (up, down) = if q >= 0.0 { (f.a, f.b) } else { (f.b, f.a) };
            if q != 0.0 {
                upwind.push((up as u32, down as u32, q.abs()));
            }
            outflow[up] += q.abs();
        }
        let q_prod: Vec<f64> = self
            .producers
            .iter()
            .zip(&prod_coef)
            .map(|(s, c)| c * (p[s.cell] - s.bhp_offset) * SECONDS_PER_DAY)
            .collect();
        for (s, &q) in self.producers.iter().zip(&q_prod) {
            outflow[s.cell] += q.max(0.0);
        }
        let produced: f64 = q_prod.iter().sum();
        let balance = (total_injection - produced).abs() / total_injection.max(1e-12);
        d.max_mass_balance_residual = d.max_mass_balance_residual.max(balance);
        for (x, dp) in self.pressure.iter_mut().zip(&p) {
            *x = self.p_ref + dp;
        }

        // The capacity bound holds in potential flow; fall back to the
        // actual throughput should it ever be exceeded.
        let throughput = outflow.iter().copied().fold(0.0, f64::max);
        let bound_step = if throughput * self.dt_transport * self.slope
            <= self.model.cfl * self.pore_volume * (1.0 + 1e-12)
        {
            self.dt_transport
        } else {
            self.model.cfl * self.pore_volume / (self.slope * throughput)
        };
        let substeps = if bound_step.is_finite() { (dt / bound_step).ceil().max(1.0) as usize } else { 1 };
        if substeps > budget {
            return Err(SimError::TransportFailed { substeps, cap: self.model.max_substeps });
        }
        let h = dt / substeps as f64;
        let scale = h / self.pore_volume;
        let mut fw = vec![0.0; n];
        let mut change = vec![0.0; n];
        let (swc, smax) = (self.model.corey.swc, self.model.corey.s_max());
        let frac = self.props.fast_fractional_flow();
        for _ in 0..substeps {
            frac.eval_into(&self.sw, &mut fw);
            change.iter_mut().for_each(|x| *x = 0.0);
            for &(up, down, q) in &upwind {
                let w = q * fw[up as usize];
                change[up as usize] -= w;
                change[down as usize] += w;
            }
            for (&cell, &q) in self.injector_cells.iter().zip(injection) {
                change[cell] += q;
            }
            for (j, (s, &q)) in self.producers.iter().zip(&q_prod).enumerate() {
                let w = q * fw[s.cell];
                change[s.cell] -= w;
                oil[j] += (q - w) * h;
                water[j] += w * h;
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (s, dc) in self.sw.iter_mut().zip(&change) {
                *s += scale * dc;
                lo = lo.min(*s);
                hi = hi.max(*s);
            }
            let d = &mut self.diagnostics;
            d.min_saturation = d.min_saturation.min(lo);
            d.max_saturation = d.max_saturation.max(hi);
            if lo < swc || hi > smax {
                d.clamped_cells += self.sw.iter().filter(|&&s| s < swc || s > smax).count();
            }
            d.transport_substeps += 1;
        }
        for (v, &q) in injected.iter_mut().zip(injection) {
            *v += q * dt;
        }
        Ok(substeps)
    }
}

/// Runs a full schedule with every producer open.
pub fn simulate(
    model: &ReservoirModel,
    econ: &EconomicParams,
    schedule: &ControlSchedule,
) -> Result<SimulationOutput, SimError> {
    schedule.validate()?;
    if schedule.n_injectors() != model.injector_count() {
        return Err(SimError::InvalidSchedule(format!(
            "schedule has {} injectors, model has {}",
            schedule.n_injectors(),
            model.injector_count()
        )));
    }
    let flux_bound = schedule.q_max * schedule.n_injectors() as f64;
    let mut sim = Simulator::new(model, econ, flux_bound)?;
    let open = vec![true; sim.n_producers()];
    let mut states = Vec::with_capacity(schedule.n_steps() + 1);
    let mut rates = Vec::with_capacity(schedule.n_steps());
    states.push(sim.state());
    for (dt, row) in schedule.dt.iter().zip(&schedule.rates) {
        rates.push(sim.advance(*dt, row, &open)?);
        states.push(sim.state());
    }
    Ok(SimulationOutput {
        npv: sim.npv(),
        rates,
        states,
        volumes: sim.volumes(),
        diagnostics: sim.diagnostics().clone(),
    })
}

/// Checks that the ensemble members share grid and wells.
pub fn check_ensemble(models: &[ReservoirModel]) -> Result<(), SimError> {
    let first = models.first().ok_or_else(|| SimError::InvalidModel("empty ensemble".into()))?;
    if let Some(i) = models.iter().position(|m| !first.same_layout(m)) {
        return Err(SimError::InvalidModel(format!("ensemble member {i} differs in grid or wells")));
    }
    Ok(())
}

/// NPV of one schedule on every ensemble member, in member order.
pub fn npv_distribution(
    models: &[ReservoirModel],
    econ: &EconomicParams,
    schedule: &ControlSchedule,
) -> Result<ScenarioDistribution, SimError> {
    check_ensemble(models)?;
    let npvs = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| simulate(m, econ, schedule).map(|o| o.npv).map_err(|e| e.in_scenario(i)))
        .collect::<Result<Vec<f64>, SimError>>()?;
    ScenarioDistribution::new(npvs).map_err(|e| SimError::InvalidModel(e.to_string()))
}
