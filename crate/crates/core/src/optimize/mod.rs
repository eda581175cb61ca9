//! Bound-constrained minimization of risk functionals of the profit
//! distribution `psi(u, theta_i)`.
//!
//! A [`ProfitModel`] maps a control vector to one profit per scenario; the
//! ensemble simulator ([`EnsembleProfit`]) and the analytic toy families in
//! [`toys`] both implement it. An [`Objective`] turns profits into a risk
//! value and a (sub)gradient, and [`solve`] runs multistart projected
//! gradient descent on the box of admissible controls.

mod ensemble_profit;
mod objective;
mod report;
mod solver;
pub mod toys;

use rayon::prelude::*;
use thiserror::Error;

use crate::distrisk::RiskError;
use crate::resim::SimError;

pub use ensemble_profit::EnsembleProfit;
pub use objective::{
    cvar_objective, offset_worstcase_objective, softmin, EvaluatedObjective, Objective, Smoothing,
};
pub use report::{evaluate_distribution, evaluate_strategy, write_trace_csv, StrategyReport};
pub use solver::{
    constant_starts, exact_objective, solve, OptimizationResult, SolverConfig, StartOutcome, Termination, TraceRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("all {} starts failed: {}", .0.len(), .0.join("; "))]
    AllStartsFailed(Vec<String>),
}

/// Per-scenario profits and their derivatives with respect to the controls.
pub struct ProfitJacobian {
    pub profits: Vec<f64>,
    /// `rows[i][c] = d psi_i / d u_c`.
    pub rows: Vec<Vec<f64>>,
}

/// Controls-to-profits map over a fixed scenario set.
pub trait ProfitModel: Sync {
    fn n_controls(&self) -> usize;

    fn n_scenarios(&self) -> usize;

    /// Componentwise lower and upper control bounds.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn profits(&self, u: &[f64]) -> Result<Vec<f64>, OptError>;

    /// Profits and Jacobian. The default uses one-sided differences with
    /// step `fd_step * (ub - lb)` per control, forward unless that would
    /// leave the box.
    fn jacobian(&self, u: &[f64], fd_step: f64) -> Result<ProfitJacobian, OptError> {
        let profits = self.profits(u)?;
        let (lb, ub) = self.bounds();
        let columns = (0..u.len())
            .into_par_iter()
            .map(|c| {
                let h = fd_step * (ub[c] - lb[c]);
                let h = if u[c] + h <= ub[c] { h } else { -h };
                let mut v = u.to_vec();
                v[c] += h;
                let shifted = self.profits(&v)?;
                Ok(shifted.iter().zip(&profits).map(|(a, b)| (a - b) / h).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>, OptError>>()?;
        let rows = (0..profits.len()).map(|i| columns.iter().map(|col| col[i]).collect()).collect();
        Ok(ProfitJacobian { profits, rows })
    }
}

/// Componentwise clamp onto `[lb, ub]`.
pub fn project(u: &mut [f64], lb: &[f64], ub: &[f64]) {
    for ((x, l), h) in u.iter_mut().zip(lb).zip(ub) {
        *x = x.clamp(*l, *h);
    }
}
