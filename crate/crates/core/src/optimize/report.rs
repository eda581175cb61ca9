use std::io::Write;

use super::{OptError, TraceRow};
use crate::distrisk::{average_cvar_risk, cvar_risk, ProfitKpis, RiskLevel, ScenarioDistribution};
use crate::resim::{npv_distribution, ControlSchedule, EconomicParams, ReservoirModel};

/// Indicators of one strategy's profit distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub kpis: ProfitKpis,
    /// `(alpha, CVaR_alpha)` over the requested levels.
    pub cvar_grid: Vec<(f64, f64)>,
    /// Equal-weight average of the grid CVaRs.
    pub total_risk: f64,
}

pub fn evaluate_distribution(d: &ScenarioDistribution, levels: &[RiskLevel]) -> Result<StrategyReport, OptError> {
    Ok(StrategyReport {
        kpis: ProfitKpis::from_distribution(d),
        cvar_grid: levels.iter().map(|l| (l.value(), cvar_risk(d, *l))).collect(),
        total_risk: average_cvar_risk(d, levels)?,
    })
}

/// Simulates `schedule` on every member and reports its indicators.
pub fn evaluate_strategy(
    models: &[ReservoirModel],
    econ: &EconomicParams,
    schedule: &ControlSchedule,
    levels: &[RiskLevel],
) -> Result<(ScenarioDistribution, StrategyReport), OptError> {
    let d = npv_distribution(models, econ, schedule)?;
    let report = evaluate_distribution(&d, levels)?;
    Ok((d, report))
}

/// Writes `start,stage,iter,objective,pg_norm,step` rows.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["start", "stage", "iter", "objective", "pg_norm", "step"])?;
    for r in rows {
        w.write_record([
            r.start.to_string(),
            r.stage.to_string(),
            r.iter.to_string(),
            format!("{:.16e}", r.objective),
            format!("{:.16e}", r.pg_norm),
            format!("{:.16e}", r.step),
        ])?;
    }
    w.flush()
}
