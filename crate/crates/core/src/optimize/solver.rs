use std::fmt;

use serde::{Deserialize, Serialize};

use super::{project, Objective, OptError, ProfitModel, Smoothing};
use crate::reactive::FULL_SCALE_Q_MAX;

/// Consecutive small-decrease iterations that count as a cost stall.
pub const STALL_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Iteration cap per start (and per continuation stage).
    pub max_iters: usize,
    /// Projected-gradient norm tolerance, absolute below 1 and relative to
    /// the initial norm above.
    pub kkt_tol: f64,
    /// Stop when the objective changes by less than this relative amount
    /// on `STALL_PATIENCE` consecutive iterations.
    pub rel_cost_tol: f64,
    /// Stop when the step is shorter than this relative amount.
    pub step_tol: f64,
    /// Finite-difference step as a fraction of each control's range.
    pub fd_step: f64,
    /// Constant-rate starting schedules on the full-scale bounds (scaled by
    /// `q_max / 79.5`).
    pub multistart_rates: Vec<f64>,
    /// Objectives are divided by this before any tolerance test. The
    /// default suits NPVs in USD; use 1 for problems of unit magnitude.
    pub scale: f64,
    /// Smoothing sharpness schedule (per normalized profit unit), applied
    /// before the exact stage.
    pub softmin_kappas: Vec<f64>,
    /// Also run the smoothing stages for CVaR objectives with `alpha < 1`
    /// (the offset worst case always uses them).
    pub smooth_cvar: bool,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 400,
            kkt_tol: 1e-6,
            rel_cost_tol: 1e-6,
            step_tol: 1e-10,
            fd_step: 1e-6,
            multistart_rates: vec![24.0, 40.0, 60.0],
            scale: 1e6,
            softmin_kappas: vec![10.0, 100.0, 1000.0],
            smooth_cvar: true,
            armijo: 1e-4,
            max_backtracks: 30,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let positive = [
            ("kkt_tol", self.kkt_tol),
            ("rel_cost_tol", self.rel_cost_tol),
            ("step_tol", self.step_tol),
            ("fd_step", self.fd_step),
            ("scale", self.scale),
            ("armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(OptError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.armijo >= 1.0 {
            return Err(OptError::InvalidConfig("armijo must be below 1".into()));
        }
        if self.softmin_kappas.iter().any(|k| !(*k > 0.0)) {
            return Err(OptError::InvalidConfig("softmin sharpness values must be positive".into()));
        }
        if self.multistart_rates.is_empty() {
            return Err(OptError::InvalidConfig("at least one multistart rate is required".into()));
        }
        Ok(())
    }
}

/// Constant schedules `rate * q_max / 79.5` for each configured rate.
pub fn constant_starts(rates: &[f64], n_controls: usize, q_max: f64) -> Vec<Vec<f64>> {
    rates.iter().map(|r| vec![r * q_max / FULL_SCALE_Q_MAX; n_controls]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Kkt,
    MaxIters,
    CostStall,
    StepStall,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Kkt => "kkt",
            Termination::MaxIters => "max_iters",
            Termination::CostStall => "cost_stall",
            Termination::StepStall => "step_stall",
        })
    }
}

/// One accepted iterate (iteration 0 is the stage's starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub start: usize,
    pub stage: usize,
    pub iter: usize,
    /// Stage objective, normalized.
    pub objective: f64,
    pub pg_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub initial: Vec<f64>,
    pub u: Vec<f64>,
    /// Exact objective at `u` in profit units (`NaN` when the start failed).
    pub objective: f64,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub u_opt: Vec<f64>,
    /// Exact objective at `u_opt` in profit units.
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub best_start: usize,
    pub starts: Vec<StartOutcome>,
    pub trace: Vec<TraceRow>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Stage<'a> {
    model: &'a dyn ProfitModel,
    objective: &'a Objective,
    smoothing: Smoothing,
    config: &'a SolverConfig,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl Stage<'_> {
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), OptError> {
        let jac = self.model.jacobian(x, self.config.fd_step)?;
        let e = self.objective.evaluate(&jac.profits, Some(&jac.rows), self.smoothing, self.config.scale)?;
        Ok((e.value, e.gradient.unwrap_or_default()))
    }

    fn value(&self, x: &[f64]) -> Result<f64, OptError> {
        let p = self.model.profits(x)?;
        Ok(self.objective.evaluate(&p, None, self.smoothing, self.config.scale)?.value)
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut y, &self.lb, &self.ub);
        x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Projected gradient descent with Armijo backtracking along the
    /// projection arc; the first trial step is the Barzilai-Borwein step.
    fn run(&self, x0: &[f64], start: usize, stage: usize, trace: &mut Vec<TraceRow>) -> Result<(Vec<f64>, usize, Termination), OptError> {
        let cfg = self.config;
        let mut x = x0.to_vec();
        project(&mut x, &self.lb, &self.ub);
        let (mut f, mut g) = self.value_and_gradient(&x)?;
        let pg0 = self.projected_gradient_norm(&x, &g);
        trace.push(TraceRow { start, stage, iter: 0, objective: f, pg_norm: pg0, step: 0.0 });
        let range = self.lb.iter().zip(&self.ub).map(|(l, u)| u - l).fold(0.0, f64::max);
        let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut iterations = 0;
        let mut stalled = 0;
        loop {
            let pg = self.projected_gradient_norm(&x, &g);
            if pg <= cfg.kkt_tol * pg0.max(1.0) {
                return Ok((x, iterations, Termination::Kkt));
            }
            if iterations >= cfg.max_iters {
                return Ok((x, iterations, Termination::MaxIters));
            }
            // Components pinned at a bound do not limit the step.
            let g_inf = (0..x.len())
                .filter(|&i| !(x[i] <= self.lb[i] && g[i] > 0.0) && !(x[i] >= self.ub[i] && g[i] < 0.0))
                .fold(0.0f64, |m, i| m.max(g[i].abs()));
            let t_max = range / g_inf;
            let mut t = match &previous {
                Some((xp, gp)) => {
                    let s: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 0.0 {
                        dot(&s, &s) / sy
                    } else {
                        t_max
                    }
                }
                None => 0.1 * t_max,
            };
            t = t.min(t_max);
            let mut accepted = None;
            for _ in 0..=cfg.max_backtracks {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                project(&mut trial, &self.lb, &self.ub);
                let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                if norm(&d) == 0.0 {
                    break;
                }
                let ft = self.value(&trial)?;
                if ft <= f + cfg.armijo * dot(&g, &d) {
                    accepted = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            let Some(next) = accepted else {
                return Ok((x, iterations, Termination::StepStall));
            };
            let (f_next, g_next) = self.value_and_gradient(&next)?;
            let step = x.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            iterations += 1;
            let f_prev = f;
            previous = Some((std::mem::replace(&mut x, next), std::mem::replace(&mut g, g_next)));
            f = f_next;
            trace.push(TraceRow {
                start,
                stage,
                iter: iterations,
                objective: f,
                pg_norm: self.projected_gradient_norm(&x, &g),
                step,
            });
            if step <= cfg.step_tol * norm(&x).max(1.0) {
                return Ok((x, iterations, Termination::StepStall));
            }
            if (f_prev - f).abs() <= cfg.rel_cost_tol * f_prev.abs().max(1.0) {
                stalled += 1;
                if stalled >= STALL_PATIENCE {
                    return Ok((x, iterations, Termination::CostStall));
                }
            } else {
                stalled = 0;
            }
        }
    }
}

/// Minimizes `objective` over the box of `model` from each start and
/// returns the start with the lowest exact objective.
pub fn solve(
    model: &dyn ProfitModel,
    objective: &Objective,
    config: &SolverConfig,
    starts: &[Vec<f64>],
) -> Result<OptimizationResult, OptError> {
    config.validate()?;
    objective.validate(model.n_scenarios())?;
    let (lb, ub) = model.bounds();
    if lb.len() != model.n_controls() || ub.len() != lb.len() || lb.iter().zip(&ub).any(|(l, u)| !(l <= u)) {
        return Err(OptError::InvalidProblem("bounds do not define a non-empty box".into()));
    }
    if starts.is_empty() {
        return Err(OptError::InvalidProblem("no starting points".into()));
    }
    if let Some(s) = starts.iter().find(|s| s.len() != lb.len()) {
        return Err(OptError::InvalidProblem(format!("start has {} controls, expected {}", s.len(), lb.len())));
    }

    let mut trace = Vec::new();
    let mut outcomes = Vec::with_capacity(starts.len());
    for (index, x0) in starts.iter().enumerate() {
        let mut x = x0.clone();
        let mut iterations = 0;
        let mut termination = None;
        let mut error = None;
        for (stage_index, smoothing) in objective.stages(&config.softmin_kappas, config.smooth_cvar).into_iter().enumerate() {
            let stage = Stage { model, objective, smoothing, config, lb: lb.clone(), ub: ub.clone() };
            match stage.run(&x, index, stage_index, &mut trace) {
                Ok((xs, its, term)) => {
                    x = xs;
                    iterations += its;
                    termination = Some(term);
                }
                Err(e) => {
                    error = Some(format!("start {index}: {e}"));
                    break;
                }
            }
        }
        let value = match error {
            None => match exact_objective(model, objective, &x) {
                Ok(v) => v,
                Err(e) => {
                    error = Some(format!("start {index}: {e}"));
                    f64::NAN
                }
            },
            Some(_) => f64::NAN,
        };
        outcomes.push(StartOutcome {
            initial: x0.clone(),
            u: x,
            objective: value,
            iterations,
            termination: if error.is_none() { termination } else { None },
            error,
        });
    }

    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.error.is_none())
        .fold(None, |best: Option<(usize, f64)>, (i, o)| match best {
            Some((_, v)) if v <= o.objective => best,
            _ => Some((i, o.objective)),
        });
    let Some((best_start, objective_value)) = best else {
        return Err(OptError::AllStartsFailed(outcomes.into_iter().filter_map(|o| o.error).collect()));
    };
    let chosen = &outcomes[best_start];
    Ok(OptimizationResult {
        u_opt: chosen.u.clone(),
        objective: objective_value,
        iterations: chosen.iterations,
        termination: chosen.termination.expect("successful start has a termination reason"),
        best_start,
        starts: outcomes,
        trace,
    })
}

/// Exact (unsmoothed, unscaled) objective at `u`.
pub fn exact_objective(model: &dyn ProfitModel, objective: &Objective, u: &[f64]) -> Result<f64, OptError> {
    let p = model.profits(u)?;
    Ok(objective.evaluate(&p, None, Smoothing::Exact, 1.0)?.value)
}
