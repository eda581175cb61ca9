use serde::{Deserialize, Serialize};

use super::SimError;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Cartesian grid with a single layer of height `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Cell length in x (m).
    pub dx: f64,
    /// Cell width in y (m).
    pub dy: f64,
    /// Layer height (m).
    pub h: f64,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.h
    }
}

/// Corey relative permeability on normalized saturation
/// `S* = (sw - swc) / (1 - swc - sor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corey {
    pub krw0: f64,
    pub kro0: f64,
    pub nw: f64,
    pub no: f64,
    pub swc: f64,
    pub sor: f64,
}

impl Default for Corey {
    fn default() -> Self {
        Self { krw0: 0.75, kro0: 0.8, nw: 3.0, no: 4.0, swc: 0.2, sor: 0.1 }
    }
}

fn power(x: f64, n: f64) -> f64 {
    if n.fract() == 0.0 && (0.0..=16.0).contains(&n) {
        let mut r = 1.0;
        for _ in 0..n as u32 {
            r *= x;
        }
        r
    } else {
        x.powf(n)
    }
}

impl Corey {
    pub fn s_max(&self) -> f64 {
        1.0 - self.sor
    }

    /// Normalized saturation, clamped to `[0, 1]`.
    pub fn normalized(&self, sw: f64) -> f64 {
        if sw <= self.swc {
            0.0
        } else if sw >= self.s_max() {
            1.0
        } else {
            (sw - self.swc) / (1.0 - self.swc - self.sor)
        }
    }

    /// True when `sw` lies outside `[swc, 1 - sor]` and gets clamped.
    pub fn is_clamped(&self, sw: f64) -> bool {
        sw < self.swc || sw > self.s_max()
    }

    /// `(krw, kro)` at water saturation `sw`.
    pub fn rel_perms(&self, sw: f64) -> (f64, f64) {
        let s = self.normalized(sw);
        (self.krw0 * power(s, self.nw), self.kro0 * power(1.0 - s, self.no))
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = self.swc >= 0.0
            && self.sor >= 0.0
            && self.swc + self.sor < 1.0
            && self.krw0 > 0.0
            && self.krw0 <= 1.0
            && self.kro0 > 0.0
            && self.kro0 <= 1.0
            && self.nw >= 1.0
            && self.no >= 1.0;
        if !ok {
            return Err(SimError::InvalidModel(format!("corey parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fluids {
    /// Water viscosity (Pa s).
    pub mu_w: f64,
    /// Oil viscosity (Pa s).
    pub mu_o: f64,
}

impl Default for Fluids {
    fn default() -> Self {
        Self { mu_w: 1.0e-3, mu_o: 5.0e-3 }
    }
}

/// Phase mobilities and fractional flow of water.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProperties {
    pub corey: Corey,
    pub fluids: Fluids,
}

impl FlowProperties {
    /// `(lambda_w, lambda_o)` in 1/(Pa s).
    pub fn mobilities(&self, sw: f64) -> (f64, f64) {
        let (krw, kro) = self.corey.rel_perms(sw);
        (krw / self.fluids.mu_w, kro / self.fluids.mu_o)
    }

    pub fn total_mobility(&self, sw: f64) -> f64 {
        let (w, o) = self.mobilities(sw);
        w + o
    }

    pub fn fractional_flow(&self, sw: f64) -> f64 {
        let (w, o) = self.mobilities(sw);
        w / (w + o)
    }

    pub(crate) fn fast_fractional_flow(&self) -> FastFractionalFlow {
        let c = &self.corey;
        let int_exp = |n: f64| (n.fract() == 0.0 && (0.0..=16.0).contains(&n)).then_some(n as u32);
        FastFractionalFlow {
            swc: c.swc,
            inv_range: 1.0 / (1.0 - c.swc - c.sor),
            aw: c.krw0 / self.fluids.mu_w,
            ao: c.kro0 / self.fluids.mu_o,
            nw: c.nw,
            no: c.no,
            nw_int: int_exp(c.nw),
            no_int: int_exp(c.no),
        }
    }

    /// Upper bound on `df_w/ds_w` over the mobile range, sampled densely
    /// and padded by 5%.
    pub fn max_fractional_flow_slope(&self) -> f64 {
        const SAMPLES: usize = 4000;
        let lo = self.corey.swc;
        let hi = self.corey.s_max();
        let h = (hi - lo) / SAMPLES as f64;
        let mut best: f64 = 0.0;
        let mut prev = self.fractional_flow(lo);
        for k in 1..=SAMPLES {
            let f = self.fractional_flow(lo + k as f64 * h);
            best = best.max((f - prev) / h);
            prev = f;
        }
        1.05 * best
    }
}

/// Fractional flow with the Corey constants folded in, for inner loops.
/// Agrees with [`FlowProperties::fractional_flow`] to rounding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FastFractionalFlow {
    swc: f64,
    inv_range: f64,
    aw: f64,
    ao: f64,
    nw: f64,
    no: f64,
    nw_int: Option<u32>,
    no_int: Option<u32>,
}

impl FastFractionalFlow {
    #[inline]
    fn pow(x: f64, n: f64, n_int: Option<u32>) -> f64 {
        match n_int {
            Some(0) => 1.0,
            Some(1) => x,
            Some(2) => x * x,
            Some(3) => x * x * x,
            Some(4) => {
                let y = x * x;
                y * y
            }
            Some(k) => x.powi(k as i32),
            None => x.powf(n),
        }
    }

    /// Evaluates `f_w` for every entry of `sw`.
    pub(crate) fn eval_into(&self, sw: &[f64], out: &mut [f64]) {
        match (self.nw_int, self.no_int) {
            (Some(3), Some(4)) => self.fill(sw, out, |x| x * x * x, |x| (x * x) * (x * x)),
            (Some(2), Some(2)) => self.fill(sw, out, |x| x * x, |x| x * x),
            _ => self.fill(
                sw,
                out,
                |x| Self::pow(x, self.nw, self.nw_int),
                |x| Self::pow(x, self.no, self.no_int),
            ),
        }
    }

    #[inline(always)]
    fn fill(&self, sw: &[f64], out: &mut [f64], pw: impl Fn(f64) -> f64, po: impl Fn(f64) -> f64) {
        for (f, &s) in out.iter_mut().zip(sw) {
            let x = ((s - self.swc) * self.inv_range).clamp(0.0, 1.0);
            let lw = self.aw * pw(x);
            let lo = self.ao * po(1.0 - x);
            *f = lw / (lw + lo);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKind {
    /// Rate controlled; rate comes from the control schedule.
    Injector,
    /// Bottom-hole pressure controlled (Pa).
    Producer { bhp: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub name: String,
    /// Cell `(i, j)`.
    pub cell: (usize, usize),
    pub kind: WellKind,
    /// Wellbore radius (m).
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    0.1
}

impl Well {
    pub fn injector(name: &str, cell: (usize, usize)) -> Self {
        Self { name: name.into(), cell, kind: WellKind::Injector, radius: default_radius() }
    }

    pub fn producer(name: &str, cell: (usize, usize), bhp: f64) -> Self {
        Self { name: name.into(), cell, kind: WellKind::Producer { bhp }, radius: default_radius() }
    }

    pub fn is_injector(&self) -> bool {
        matches!(self.kind, WellKind::Injector)
    }
}

/// One geological realization: grid, rock, fluids, wells and its
/// permeability field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirModel {
    pub grid: Grid,
    pub porosity: f64,
    /// Isotropic permeability per cell (m^2), index `i + nx * j`.
    pub perm: Vec<f64>,
    pub corey: Corey,
    pub fluids: Fluids,
    pub wells: Vec<Well>,
    /// Initial water saturation; raised to `swc` when below it.
    pub sw_init: f64,
    /// Initial reservoir pressure (Pa); only reported in the initial state.
    pub p_init: f64,
    /// Pressure solves per control step.
    pub pressure_steps: usize,
    /// Courant factor for the explicit transport substeps.
    pub cfl: f64,
    /// Cap on transport substeps per control step.
    pub max_substeps: usize,
}

impl ReservoirModel {
    /// Homogeneous model with the default rock and fluid parameters.
    pub fn homogeneous(grid: Grid, perm: f64, wells: Vec<Well>) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            porosity: 0.2,
            perm: vec![perm; n],
            corey: Corey::default(),
            fluids: Fluids::default(),
            wells,
            sw_init: 0.1,
            p_init: 40.0e6,
            pressure_steps: 3,
            cfl: 0.9,
            max_substeps: 10_000,
        }
    }

    pub fn with_perm(&self, perm: Vec<f64>) -> Self {
        Self { perm, ..self.clone() }
    }

    pub fn flow_properties(&self) -> FlowProperties {
        FlowProperties { corey: self.corey.clone(), fluids: self.fluids.clone() }
    }

    pub fn initial_saturation(&self) -> f64 {
        self.sw_init.max(self.corey.swc)
    }

    pub fn pore_volume(&self) -> f64 {
        self.porosity * self.grid.cell_volume()
    }

    pub fn injector_count(&self) -> usize {
        self.wells.iter().filter(|w| w.is_injector()).count()
    }

    pub fn producer_count(&self) -> usize {
        self.wells.len() - self.injector_count()
    }

    pub fn well_cell(&self, well: &Well) -> usize {
        self.grid.cell_index(well.cell.0, well.cell.1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 || !(g.dx > 0.0 && g.dy > 0.0 && g.h > 0.0) {
            return Err(SimError::InvalidModel(format!("grid {g:?}")));
        }
        if self.perm.len() != g.n_cells() {
            return Err(SimError::InvalidModel(format!(
                "permeability has {} cells, grid has {}",
                self.perm.len(),
                g.n_cells()
            )));
        }
        if let Some(c) = self.perm.iter().position(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(SimError::InvalidModel(format!("permeability not positive in cell {c}")));
        }
        if !(self.porosity > 0.0 && self.porosity < 1.0) {
            return Err(SimError::InvalidModel(format!("porosity {}", self.porosity)));
        }
        self.corey.validate()?;
        if !(self.fluids.mu_w > 0.0 && self.fluids.mu_o > 0.0) {
            return Err(SimError::InvalidModel("viscosities must be positive".into()));
        }
        if self.pressure_steps == 0 || !(self.cfl > 0.0 && self.cfl <= 1.0) || self.max_substeps == 0 {
            return Err(SimError::InvalidModel("time stepping parameters".into()));
        }
        for w in &self.wells {
            if w.cell.0 >= g.nx || w.cell.1 >= g.ny {
                return Err(SimError::InvalidModel(format!("well {} outside grid", w.name)));
            }
            if !(w.radius > 0.0) {
                return Err(SimError::InvalidModel(format!("well {} radius", w.name)));
            }
        }
        if self.producer_count() == 0 {
            return Err(SimError::InvalidModel("no producer".into()));
        }
        Ok(())
    }

    /// True when `other` differs from `self` only in permeability.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.grid == other.grid && self.wells == other.wells
    }
}

/// Peaceman well index `2 pi k h / ln(r_e / r_w)` with the isotropic
/// equivalent radius `r_e = 0.14 sqrt(dx^2 + dy^2)`.
pub fn well_index(model: &ReservoirModel, well: &Well) -> Result<f64, SimError> {
    let g = &model.grid;
    let r_e = 0.14 * (g.dx * g.dx + g.dy * g.dy).sqrt();
    if r_e <= well.radius {
        return Err(SimError::WellRadius { well: well.name.clone(), r_e, r_w: well.radius });
    }
    let k = model.perm[model.well_cell(well)];
    Ok(2.0 * std::f64::consts::PI * k * g.h / (r_e / well.radius).ln())
}

/// Prices and discounting for the NPV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomicParams {
    /// Oil price (USD/m^3).
    pub oil_price: f64,
    /// Cost of separating produced water (USD/m^3).
    pub water_production_cost: f64,
    /// Cost of injecting water (USD/m^3).
    pub water_injection_cost: f64,
    /// Discount factor per reference period.
    pub discount: f64,
    /// Reference period (days).
    pub tau_days: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            oil_price: 126.0,
            water_production_cost: 19.0,
            water_injection_cost: 6.0,
            discount: 0.0,
            tau_days: 365.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.oil_price > 0.0
            && self.water_production_cost >= 0.0
            && self.water_injection_cost >= 0.0
            && self.discount >= 0.0
            && self.tau_days > 0.0;
        if !ok {
            return Err(SimError::InvalidModel(format!("economics {self:?}")));
        }
        Ok(())
    }

    /// Discount multiplier `(1 + d)^(-t / tau)` at time `t` (days).
    pub fn discount_factor(&self, t_days: f64) -> f64 {
        (1.0 + self.discount).powf(-t_days / self.tau_days)
    }

    /// Undiscounted cash flow for produced/injected volumes (m^3).
    pub fn cash_flow(&self, oil: f64, water_produced: f64, water_injected: f64) -> f64 {
        self.oil_price * oil - self.water_production_cost * water_produced - self.water_injection_cost * water_injected
    }
}

/// Piecewise-constant injection rates, one row per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    /// Step lengths (days).
    pub dt: Vec<f64>,
    /// `rates[k][w]`: rate of injector `w` during step `k` (m^3/day).
    pub rates: Vec<Vec<f64>>,
    /// Upper rate bound (m^3/day); the lower bound is zero.
    pub q_max: f64,
}

impl ControlSchedule {
    pub fn new(dt: Vec<f64>, rates: Vec<Vec<f64>>, q_max: f64) -> Result<Self, SimError> {
        let s = Self { dt, rates, q_max };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(n_steps: usize, dt: f64, n_injectors: usize, rate: f64, q_max: f64) -> Result<Self, SimError> {
        Self::new(vec![dt; n_steps], vec![vec![rate; n_injectors]; n_steps], q_max)
    }

    /// Builds a schedule from a step-major flat vector `u[k * n_inj + w]`.
    pub fn from_flat(u: &[f64], dt: &[f64], n_injectors: usize, q_max: f64) -> Result<Self, SimError> {
        if n_injectors == 0 || u.len() != dt.len() * n_injectors {
            return Err(SimError::InvalidSchedule(format!(
                "{} controls for {} steps x {} injectors",
                u.len(),
                dt.len(),
                n_injectors
            )));
        }
        Self::new(dt.to_vec(), u.chunks(n_injectors).map(<[f64]>::to_vec).collect(), q_max)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.rates.iter().flatten().copied().collect()
    }

    pub fn n_steps(&self) -> usize {
        self.dt.len()
    }

    pub fn n_injectors(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        self.dt.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dt.is_empty() || self.dt.len() != self.rates.len() {
            return Err(SimError::InvalidSchedule("step count mismatch".into()));
        }
        if self.dt.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(SimError::InvalidSchedule("step lengths must be positive".into()));
        }
        if !(self.q_max > 0.0 && self.q_max.is_finite()) {
            return Err(SimError::InvalidSchedule(format!("q_max {}", self.q_max)));
        }
        let width = self.rates[0].len();
        for (k, row) in self.rates.iter().enumerate() {
            if row.len() != width {
                return Err(SimError::InvalidSchedule(format!("ragged row {k}")));
            }
            if let Some(&q) = row.iter().find(|&&q| !(0.0..=self.q_max).contains(&q)) {
                return Err(SimError::InvalidSchedule(format!("rate {q} at step {k} outside [0, {}]", self.q_max)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_model() -> ReservoirModel {
        let grid = Grid { nx: 3, ny: 3, dx: 8.0, dy: 8.0, h: 4.0 };
        ReservoirModel::homogeneous(grid, 1e-12, vec![Well::producer("P1", (1, 1), 39.5e6)])
    }

    #[test]
    fn rel_perm_endpoints() {
        let c = Corey::default();
        assert_eq!(c.rel_perms(c.swc), (0.0, 0.8));
        let (krw, kro) = c.rel_perms(c.s_max());
        assert_relative_eq!(krw, 0.75, epsilon = 1e-15);
        assert_eq!(kro, 0.0);
    }

    #[test]
    fn rel_perm_midpoint() {
        let c = Corey::default();
        let sw = c.swc + 0.5 * (1.0 - c.swc - c.sor);
        let (krw, kro) = c.rel_perms(sw);
        assert_relative_eq!(krw, 0.09375, epsilon = 1e-15);
        assert_relative_eq!(kro, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn rel_perm_clamps_outside_range() {
        let c = Corey::default();
        assert_eq!(c.rel_perms(0.0), c.rel_perms(c.swc));
        assert_eq!(c.rel_perms(1.0), c.rel_perms(c.s_max()));
        assert!(c.is_clamped(0.1));
        assert!(!c.is_clamped(0.5));
    }

    #[test]
    fn peaceman_radius_for_table_geometry() {
        let m = table_model();
        let w = &m.wells[0];
        let r_e = 0.14 * 8.0 * 2f64.sqrt();
        assert_relative_eq!(r_e, 1.5839, epsilon = 1e-4);
        assert_relative_eq!((r_e / 0.1f64).ln(), 2.7626, epsilon = 2e-4);
        let wi = well_index(&m, w).unwrap();
        assert_relative_eq!(wi, 2.0 * std::f64::consts::PI * 1e-12 * 4.0 / 2.762_487_4, max_relative = 1e-6);
    }

    #[test]
    fn well_index_is_linear_in_permeability() {
        let m = table_model();
        let w = m.wells[0].clone();
        let wi = well_index(&m, &w).unwrap();
        let doubled = m.with_perm(m.perm.iter().map(|k| 2.0 * k).collect());
        assert_relative_eq!(well_index(&doubled, &w).unwrap(), 2.0 * wi, max_relative = 1e-15);
        let mut zero = m.clone();
        zero.perm[4] = 0.0;
        assert_eq!(well_index(&zero, &w).unwrap(), 0.0);
    }

    #[test]
    fn well_radius_larger_than_equivalent_radius() {
        let mut m = table_model();
        m.wells[0].radius = 2.0;
        let err = well_index(&m, &m.wells[0]).unwrap_err();
        assert!(err.to_string().contains("well radius exceeds equivalent radius"));
    }

    #[test]
    fn schedule_bounds_checked() {
        assert!(ControlSchedule::constant(2, 90.0, 2, 80.0, 79.5).is_err());
        assert!(ControlSchedule::constant(2, 90.0, 2, -1.0, 79.5).is_err());
        let s = ControlSchedule::from_flat(&[1.0, 2.0, 3.0, 4.0], &[90.0, 90.0], 2, 10.0).unwrap();
        assert_eq!(s.rates, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(s.to_flat(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(ControlSchedule::from_flat(&[1.0, 2.0, 3.0], &[90.0, 90.0], 2, 10.0).is_err());
    }

    #[test]
    fn shutin_threshold_identity() {
        // f_w > r_o / (r_o + r_wP) exactly when r_o q_o - r_wP q_w < 0
        let e = EconomicParams::default();
        let threshold = e.oil_price / (e.oil_price + e.water_production_cost);
        assert_relative_eq!(threshold, 0.868_965_517, epsilon = 1e-9);
        for k in 0..=1000 {
            let fw = k as f64 / 1000.0;
            let (qw, qo) = (fw * 10.0, (1.0 - fw) * 10.0);
            let revenue = e.oil_price * qo - e.water_production_cost * qw;
            if (fw - threshold).abs() > 1e-12 {
                assert_eq!(fw > threshold, revenue < 0.0, "fw = {fw}");
            }
        }
    }

    #[test]
    fn fast_fractional_flow_matches_reference() {
        for corey in [Corey::default(), Corey { nw: 2.5, no: 1.0, ..Corey::default() }] {
            let props = FlowProperties { corey, fluids: Fluids::default() };
            let sw: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
            let mut fast = vec![0.0; sw.len()];
            props.fast_fractional_flow().eval_into(&sw, &mut fast);
            for (s, f) in sw.iter().zip(&fast) {
                assert!((props.fractional_flow(*s) - f).abs() < 1e-14, "sw = {s}");
            }
        }
    }

    #[test]
    fn fractional_flow_is_monotone_with_bounded_slope() {
        let props = table_model().flow_properties();
        let slope = props.max_fractional_flow_slope();
        let mut prev = props.fractional_flow(0.2);
        assert_eq!(prev, 0.0);
        for k in 1..=700 {
            let s = 0.2 + k as f64 * 0.001;
            let f = props.fractional_flow(s);
            assert!(f >= prev);
            assert!((f - prev) / 0.001 <= slope);
            prev = f;
        }
        assert_relative_eq!(prev, 1.0, epsilon = 1e-12);
    }
}
