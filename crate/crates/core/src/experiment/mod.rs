//! Experiment orchestration: ensemble, reactive reference, one optimization
//! per strategy, and the CSV report.
//!
//! An output directory holds `npv_distribution.csv` (scenario x strategy)
//! and `strategies.csv`; every KPI table is derived from those two files by
//! [`report`], so rerunning it on a stored directory reproduces the tables
//! byte for byte.

mod config;
mod tables;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::distrisk::RiskError;
use crate::ensemble::{self, Ensemble, EnsembleError};
use crate::optimize::{
    constant_starts, solve, write_trace_csv, EnsembleProfit, Objective, OptError, OptimizationResult, ProfitModel,
};
use crate::reactive::{run_reactive, ReactiveOutcome};
use crate::resim::{npv_distribution, ControlSchedule, ReservoirModel, SimError};

pub use config::{
    standard_strategies, ControlConfig, EnsembleConfig, ExperimentConfig, ReactiveConfig, ReservoirConfig,
    StrategyConfig, StrategyKind,
};
pub use tables::{cvar_curve_levels, num, write_kpi_tables, DistributionTable, KPI_FILES, NPV_FILE, STRATEGIES_FILE};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config:{line}:{column}: {message}")]
    Config { line: usize, column: usize, message: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Optimization(#[from] OptError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

impl ExperimentError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Whether the error stems from the user's input rather than a run.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Invalid(_) | Self::UnknownStrategy(_))
    }
}

/// Ensemble, member models and reference outcomes shared by all strategies.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub ensemble: Ensemble,
    pub models: Vec<ReservoirModel>,
    pub reactive: Vec<ReactiveOutcome>,
}

impl Prepared {
    pub fn reference_npv(&self) -> Vec<f64> {
        self.reactive.iter().map(|o| o.npv).collect()
    }
}

/// Generates (or loads) the ensemble and runs the reactive reference on
/// every member.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    config.validate()?;
    let ensemble = match &config.ensemble.path {
        Some(dir) => {
            let e = ensemble::load(dir)?;
            let spec = config.ensemble_spec();
            if e.spec.nx != spec.nx || e.spec.ny != spec.ny || e.len() != spec.n_d {
                return Err(ExperimentError::Invalid(format!(
                    "stored ensemble is {} members on {}x{}, config wants {} on {}x{}",
                    e.len(),
                    e.spec.nx,
                    e.spec.ny,
                    spec.n_d,
                    spec.nx,
                    spec.ny
                )));
            }
            e
        }
        None => ensemble::generate(&config.ensemble_spec())?,
    };
    let base = config.reservoir.model(vec![1.0; config.reservoir.grid.n_cells()]);
    let models = ensemble.models(&base)?;
    let policy = config.reactive_policy();
    let dt = config.dt();
    let reactive = {
        use rayon::prelude::*;
        models
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                run_reactive(m, &config.economics, &policy, &dt, config.control.q_max).map_err(|e| e.in_scenario(i))
            })
            .collect::<Result<Vec<_>, SimError>>()?
    };
    Ok(Prepared { config: config.clone(), ensemble, models, reactive })
}

/// Outcome of one strategy.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: StrategyConfig,
    pub npv: Vec<f64>,
    pub schedule: ControlSchedule,
    /// `None` for the reference strategy.
    pub optimization: Option<OptimizationResult>,
    pub seconds: f64,
}

fn reference_schedule(p: &Prepared) -> Result<ControlSchedule, ExperimentError> {
    let c = &p.config.control;
    let n_inj = p.models[0].injector_count();
    Ok(ControlSchedule::constant(c.n_steps, c.dt, n_inj, p.config.reactive_policy().injection_rate, c.q_max)?)
}

/// Solves one strategy. The reference strategy is the reactive policy and
/// needs no optimization; its `schedule` is the nominal constant injection
/// (injection stops early in members where every producer was shut).
pub fn run_strategy(
    p: &Prepared,
    profit: &EnsembleProfit,
    strategy: &StrategyConfig,
) -> Result<StrategyRun, ExperimentError> {
    let clock = Instant::now();
    let objective = match &strategy.kind {
        StrategyKind::Reference => {
            return Ok(StrategyRun {
                strategy: strategy.clone(),
                npv: p.reference_npv(),
                schedule: reference_schedule(p)?,
                optimization: None,
                seconds: clock.elapsed().as_secs_f64(),
            })
        }
        StrategyKind::Cvar { alpha } => Objective::CVaR(*alpha),
        StrategyKind::Expected => Objective::Expected,
        StrategyKind::WorstCase => Objective::WorstCase,
        StrategyKind::OffsetWorstCase => Objective::OffsetWorstCase { reference: p.reference_npv() },
    };
    let solver = &p.config.solver;
    let starts = constant_starts(&solver.multistart_rates, profit.n_controls(), p.config.control.q_max);
    let result = solve(profit, &objective, solver, &starts)?;
    let npv = profit.profits(&result.u_opt)?;
    let schedule = profit.schedule(&result.u_opt)?;
    Ok(StrategyRun { strategy: strategy.clone(), npv, schedule, optimization: Some(result), seconds: clock.elapsed().as_secs_f64() })
}

/// Summary of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub runs: Vec<StrategyRun>,
    /// `(strategy, message)` for each failed strategy.
    pub failures: Vec<(String, String)>,
}

impl ExperimentSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every configured strategy, or only those named in `only`, and
/// writes the report into `config.output_dir`. Strategy failures are
/// recorded and the remaining strategies still run. `log` receives one
/// progress line per stage.
pub fn run_experiment(
    config: &ExperimentConfig,
    only: Option<&[String]>,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentSummary, ExperimentError> {
    let strategies = select(config, only)?;
    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    let clock = Instant::now();
    let p = prepare(config)?;
    log(&format!("ensemble of {} members and reactive reference ready ({:.1}s)", p.models.len(), clock.elapsed().as_secs_f64()));
    ensemble::save(&p.ensemble, &dir.join("ensemble"))?;

    let profit = EnsembleProfit::new(&p.models, &config.economics, config.dt(), config.control.q_max)?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for s in &strategies {
        match run_strategy(&p, &profit, s) {
            Ok(run) => {
                match &run.optimization {
                    Some(r) => log(&format!(
                        "{}: objective {:.6e}, {} iterations ({}), start {} ({:.1}s)",
                        s.name, r.objective, r.iterations, r.termination, r.best_start, run.seconds
                    )),
                    None => log(&format!("{}: reactive reference", s.name)),
                }
                runs.push(run);
            }
            Err(e) => {
                log(&format!("{}: FAILED: {e}", s.name));
                failures.push((s.name.clone(), e.to_string()));
            }
        }
    }
    write_outputs(&p, &dir, &strategies, &runs, &failures)?;
    log(&format!("wrote {} ({:.1}s total)", dir.display(), clock.elapsed().as_secs_f64()));
    Ok(ExperimentSummary { dir, runs, failures })
}

fn select(config: &ExperimentConfig, only: Option<&[String]>) -> Result<Vec<StrategyConfig>, ExperimentError> {
    match only {
        None => Ok(config.strategies()),
        Some(names) => names
            .iter()
            .map(|n| config.strategy(n).ok_or_else(|| ExperimentError::UnknownStrategy(n.clone())))
            .collect(),
    }
}

fn create_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

fn kind_name(kind: &StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Cvar { .. } => "cvar",
        StrategyKind::Expected => "expected",
        StrategyKind::WorstCase => "worst_case",
        StrategyKind::OffsetWorstCase => "offset_worst_case",
        StrategyKind::Reference => "reference",
    }
}

fn write_outputs(
    p: &Prepared,
    dir: &Path,
    strategies: &[StrategyConfig],
    runs: &[StrategyRun],
    failures: &[(String, String)],
) -> Result<(), ExperimentError> {
    for sub in ["schedules", "traces"] {
        create_dir(&dir.join(sub))?;
    }
    for run in runs {
        let name = &run.strategy.name;
        write_file(&dir.join("schedules").join(format!("{name}.csv")), &schedule_csv(&run.schedule))?;
        if let Some(r) = &run.optimization {
            let path = dir.join("traces").join(format!("{name}.csv"));
            let mut buf = Vec::new();
            write_trace_csv(&r.trace, &mut buf).map_err(|e| ExperimentError::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| ExperimentError::io(&path, e))?;
        }
    }
    write_file(&dir.join(STRATEGIES_FILE), &strategies_csv(strategies, runs, failures))?;
    write_file(&dir.join("shutins.csv"), &shutins_csv(&p.reactive))?;

    let table = DistributionTable {
        names: runs.iter().map(|r| r.strategy.name.clone()).collect(),
        columns: runs.iter().map(|r| r.npv.clone()).collect(),
    };
    let npv_path = dir.join(NPV_FILE);
    if table.names.is_empty() {
        if npv_path.exists() {
            fs::remove_file(&npv_path).map_err(|e| ExperimentError::io(&npv_path, e))?;
        }
    } else {
        write_file(&npv_path, &table.to_csv())?;
        let reference = runs.iter().find(|r| r.strategy.kind == StrategyKind::Reference).map(|r| r.strategy.name.as_str());
        write_kpi_tables(dir, &table, reference)?;
    }
    write_file(&dir.join("manifest.json"), &manifest(p, runs, failures))?;
    Ok(())
}

/// `step,t_start,t_end,inj_0,...` with one row per control step.
pub fn schedule_csv(s: &ControlSchedule) -> String {
    let mut out = String::from("step,t_start,t_end");
    for j in 0..s.n_injectors() {
        let _ = write!(out, ",inj_{j}");
    }
    out.push('\n');
    let mut t = 0.0;
    for (k, (dt, rates)) in s.dt.iter().zip(&s.rates).enumerate() {
        let _ = write!(out, "{k},{},{}", num(t), num(t + dt));
        t += dt;
        for r in rates {
            out.push(',');
            out.push_str(&num(*r));
        }
        out.push('\n');
    }
    out
}

/// Reads a file written by [`schedule_csv`].
pub fn read_schedule(path: &Path, q_max: f64) -> Result<ControlSchedule, ExperimentError> {
    let parse_err = |line: u64, message: String| ExperimentError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let n_fields = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.len();
    if n_fields < 4 {
        return Err(parse_err(1, "expected header step,t_start,t_end,inj_0,...".into()));
    }
    let (mut dt, mut rates) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let values = record
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(line, format!("invalid number {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != n_fields - 1 {
            return Err(parse_err(line, format!("expected {n_fields} fields")));
        }
        dt.push(values[1] - values[0]);
        rates.push(values[2..].to_vec());
    }
    Ok(ControlSchedule::new(dt, rates, q_max)?)
}

fn strategies_csv(strategies: &[StrategyConfig], runs: &[StrategyRun], failures: &[(String, String)]) -> String {
    let mut s = String::from("strategy,kind,alpha,status,objective,iterations,termination,best_start,message\n");
    for st in strategies {
        let alpha = match st.kind {
            StrategyKind::Cvar { alpha } => num(alpha),
            StrategyKind::Expected => num(1.0),
            StrategyKind::WorstCase => num(0.0),
            _ => String::new(),
        };
        let kind = kind_name(&st.kind);
        if let Some(run) = runs.iter().find(|r| r.strategy.name == st.name) {
            match &run.optimization {
                Some(r) => {
                    let _ = writeln!(
                        s,
                        "{},{kind},{alpha},ok,{},{},{},{},",
                        st.name,
                        num(r.objective),
                        r.iterations,
                        r.termination,
                        r.best_start
                    );
                }
                None => {
                    let _ = writeln!(s, "{},{kind},{alpha},ok,,,,,", st.name);
                }
            }
        } else if let Some((_, msg)) = failures.iter().find(|(n, _)| *n == st.name) {
            let msg = msg.replace(['"', '\n'], " ");
            let _ = writeln!(s, "{},{kind},{alpha},failed,,,,,\"{msg}\"", st.name);
        }
    }
    s
}

fn shutins_csv(reactive: &[ReactiveOutcome]) -> String {
    let mut s = String::from("scenario,producer,shutin_day\n");
    for (i, o) in reactive.iter().enumerate() {
        for (j, t) in o.shutin_times.iter().enumerate() {
            let _ = writeln!(s, "{i},{j},{}", t.map(num).unwrap_or_default());
        }
    }
    s
}

fn manifest(p: &Prepared, runs: &[StrategyRun], failures: &[(String, String)]) -> String {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let config: serde_json::Value = serde_json::from_str(&p.config.to_json()).expect("config is valid JSON");
    let value = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": created,
        "seed": p.config.seed,
        "ensemble_seed": p.ensemble.spec.seed,
        "n_d": p.models.len(),
        "config": config,
        "strategies": runs.iter().map(|r| serde_json::json!({
            "name": r.strategy.name,
            "seconds": r.seconds,
        })).collect::<Vec<_>>(),
        "failures": failures.iter().map(|(n, m)| serde_json::json!({"name": n, "message": m})).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&value).expect("manifest serializes") + "\n"
}

/// Recomputes every KPI table in `dir` from its stored distributions.
pub fn report(dir: &Path) -> Result<DistributionTable, ExperimentError> {
    let table = DistributionTable::read(&dir.join(NPV_FILE))?;
    let reference = reference_name(&dir.join(STRATEGIES_FILE))?;
    write_kpi_tables(dir, &table, reference.as_deref())?;
    Ok(table)
}

fn reference_name(path: &Path) -> Result<Option<String>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| ExperimentError::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })?;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ExperimentError::Parse {
            path: path.to_path_buf(),
            line: row as u64 + 2,
            message: e.to_string(),
        })?;
        if record.get(1) == Some("reference") && record.get(3) == Some("ok") {
            return Ok(record.get(0).map(str::to_string));
        }
    }
    Ok(None)
}

/// Per-member NPV of one strategy without optimizing: the reactive policy
/// for the reference, otherwise the given schedule.
pub fn simulate_strategy(
    p: &Prepared,
    strategy: &StrategyConfig,
    schedule: Option<&ControlSchedule>,
) -> Result<Vec<f64>, ExperimentError> {
    match (&strategy.kind, schedule) {
        (StrategyKind::Reference, _) => Ok(p.reference_npv()),
        (_, Some(s)) => Ok(npv_distribution(&p.models, &p.config.economics, s)?.into_outcomes()),
        (_, None) => Err(ExperimentError::Invalid(format!(
            "strategy {} is optimized; pass the schedule to simulate",
            strategy.name
        ))),
    }
}
