use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::distrisk::standard_risk_grid;
use crate::ensemble::EnsembleSpec;
use crate::optimize::SolverConfig;
use crate::reactive::ReactivePolicy;
use crate::resim::{Corey, EconomicParams, Fluids, Grid, ReservoirModel, Well};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub grid: Grid,
    #[serde(default = "default_porosity")]
    pub porosity: f64,
    #[serde(default)]
    pub corey: Corey,
    #[serde(default)]
    pub fluids: Fluids,
    pub wells: Vec<Well>,
    #[serde(default = "default_sw_init")]
    pub sw_init: f64,
    #[serde(default = "default_p_init")]
    pub p_init: f64,
    #[serde(default = "default_pressure_steps")]
    pub pressure_steps: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
}

fn default_porosity() -> f64 {
    0.2
}
fn default_sw_init() -> f64 {
    0.1
}
fn default_p_init() -> f64 {
    40e6
}
fn default_pressure_steps() -> usize {
    3
}
fn default_cfl() -> f64 {
    0.9
}
fn default_max_substeps() -> usize {
    10_000
}

impl ReservoirConfig {
    /// Model with the given permeability field.
    pub fn model(&self, perm: Vec<f64>) -> ReservoirModel {
        ReservoirModel {
            grid: self.grid.clone(),
            porosity: self.porosity,
            perm,
            corey: self.corey.clone(),
            fluids: self.fluids.clone(),
            wells: self.wells.clone(),
            sw_init: self.sw_init,
            p_init: self.p_init,
            pressure_steps: self.pressure_steps,
            cfl: self.cfl,
            max_substeps: self.max_substeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_d: usize,
    pub log_mean: f64,
    pub log_std: f64,
    pub corr_len: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_len_y: Option<f64>,
    /// Load members from this directory instead of generating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub n_steps: usize,
    /// Control step length (days).
    pub dt: f64,
    /// Injector rate bound (m^3/day).
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactiveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watercut_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyKind {
    Cvar { alpha: f64 },
    Expected,
    WorstCase,
    OffsetWorstCase,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: StrategyKind,
}

impl StrategyConfig {
    pub fn new(name: &str, kind: StrategyKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn is_optimized(&self) -> bool {
        !matches!(self.kind, StrategyKind::Reference)
    }
}

/// The standard strategy set: worst-case CVaR (`alpha = p/2`), CVaR at
/// 10%..90%, expected profit, offset worst case and the reference.
pub fn standard_strategies(n_d: usize) -> Vec<StrategyConfig> {
    let grid = standard_risk_grid(n_d);
    let mut s = vec![StrategyConfig::new("wc-opt", StrategyKind::Cvar { alpha: grid[0].value() })];
    for j in 1..=9 {
        s.push(StrategyConfig::new(&format!("cs-{}", 10 * j), StrategyKind::Cvar { alpha: j as f64 / 10.0 }));
    }
    s.push(StrategyConfig::new("ro", StrategyKind::Expected));
    s.push(StrategyConfig::new("off-wc-opt", StrategyKind::OffsetWorstCase));
    s.push(StrategyConfig::new("ref", StrategyKind::Reference));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub economics: EconomicParams,
    pub ensemble: EnsembleConfig,
    pub control: ControlConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactive: Option<ReactiveConfig>,
    /// Defaults to [`standard_strategies`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<StrategyConfig>>,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("riskflood-out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = serde_json::from_str(text).map_err(|e| {
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let message = e.to_string();
            ExperimentError::Config {
                line: e.line(),
                column: e.column(),
                message: message.strip_suffix(&suffix).unwrap_or(&message).to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn strategies(&self) -> Vec<StrategyConfig> {
        self.strategies.clone().unwrap_or_else(|| standard_strategies(self.ensemble.n_d))
    }

    pub fn strategy(&self, name: &str) -> Option<StrategyConfig> {
        self.strategies().into_iter().find(|s| s.name == name)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            n_d: self.ensemble.n_d,
            seed: self.seed,
            log_mean: self.ensemble.log_mean,
            log_std: self.ensemble.log_std,
            corr_len: self.ensemble.corr_len,
            corr_len_y: self.ensemble.corr_len_y,
            nx: self.reservoir.grid.nx,
            ny: self.reservoir.grid.ny,
        }
    }

    pub fn dt(&self) -> Vec<f64> {
        vec![self.control.dt; self.control.n_steps]
    }

    pub fn reactive_policy(&self) -> ReactivePolicy {
        let standard = ReactivePolicy::standard(self.control.q_max, &self.economics);
        let r = self.reactive.clone().unwrap_or(ReactiveConfig { injection_rate: None, watercut_threshold: None });
        ReactivePolicy {
            injection_rate: r.injection_rate.unwrap_or(standard.injection_rate),
            watercut_threshold: r.watercut_threshold.unwrap_or(standard.watercut_threshold),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        if self.control.n_steps == 0 || !(self.control.dt > 0.0) || !(self.control.q_max > 0.0) {
            return bad("control block needs n_steps >= 1, dt > 0 and q_max > 0".into());
        }
        let strategies = self.strategies();
        for (i, s) in strategies.iter().enumerate() {
            if strategies[..i].iter().any(|t| t.name == s.name) {
                return bad(format!("duplicate strategy name {:?}", s.name));
            }
            if s.name.is_empty() || s.name.contains(['/', '\\', ',']) {
                return bad(format!("strategy name {:?} must be non-empty without '/', '\\\\' or ','", s.name));
            }
            if let StrategyKind::Cvar { alpha } = s.kind {
                if !(0.0..=1.0).contains(&alpha) {
                    return bad(format!("strategy {}: alpha {alpha} outside [0, 1]", s.name));
                }
            }
        }
        self.ensemble_spec().validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        self.reservoir.model(vec![1.0; self.reservoir.grid.n_cells()]).validate()?;
        self.economics.validate()?;
        self.reactive_policy().validate(self.control.q_max)?;
        self.solver.validate()?;
        Ok(())
    }
}
