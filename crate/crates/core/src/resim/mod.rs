//! Desk-scale incompressible two-phase (oil/water) waterflooding simulator
//! with Peaceman wells and NPV accounting.

mod linalg;
mod model;
mod simulator;

use thiserror::Error;

pub use linalg::{relative_residual, BandedCholesky, BandedSpd};
pub use model::{
    well_index, ControlSchedule, Corey, EconomicParams, FlowProperties, Fluids, Grid, ReservoirModel, Well,
    WellKind, SECONDS_PER_DAY,
};
pub use simulator::{
    check_ensemble, npv_distribution, simulate, Diagnostics, ProducerRates, SimState, SimulationOutput, Simulator,
    StepRates, Volumes, PRESSURE_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("well radius exceeds equivalent radius for well {well} (r_w = {r_w}, r_e = {r_e})")]
    WellRadius { well: String, r_e: f64, r_w: f64 },
    #[error("pressure system singular")]
    PressureSingular,
    #[error("pressure solve residual {residual:e} above tolerance")]
    PressureAccuracy { residual: f64 },
    #[error("transport step failed: {substeps} substeps exceed the remaining budget of the {cap}-substep cap")]
    TransportFailed { substeps: usize, cap: usize },
    #[error("scenario {index}: {source}")]
    Scenario { index: usize, source: Box<SimError> },
}

impl SimError {
    pub fn in_scenario(self, index: usize) -> Self {
        SimError::Scenario { index, source: Box::new(self) }
    }
}

/// Writes a state snapshot as `cell,pressure,sw` rows.
pub fn write_state_csv<W: std::io::Write>(state: &SimState, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "pressure", "sw"])?;
    for (c, (p, s)) in state.pressure.iter().zip(&state.sw).enumerate() {
        w.write_record([c.to_string(), format!("{p:.16e}"), format!("{s:.16e}")])?;
    }
    w.flush()
}
