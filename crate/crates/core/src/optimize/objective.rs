use super::{OptError, ProfitModel};
use crate::distrisk::{cvar_risk, normalized_tail_weights, RiskLevel, ScenarioDistribution};

/// Risk functional minimized over the controls.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `CVaR_alpha` of the profit distribution; `alpha = 0` is the worst case.
    CVaR(f64),
    /// `-E(psi)`; evaluated through the `CVaR_1` path.
    Expected,
    /// `-min_i psi^i`; evaluated through the `CVaR_0` path.
    WorstCase,
    /// `-min_i (psi^i - reference_i)`: worst realization of the profit
    /// offset against per-scenario reference profits.
    OffsetWorstCase { reference: Vec<f64> },
}

/// Exact evaluation or a smooth approximation with sharpness `kappa` (per
/// normalized profit unit). Minima become log-sum-exp softmins; for
/// `CVaR_alpha` with `0 < alpha < 1` the plus function in
/// `CVaR_alpha = min_c { -c + E[(c - psi)_+] / alpha }` becomes a softplus,
/// with the inner minimization solved exactly. `CVaR_1` is always exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Exact,
    Smoothed(f64),
}

/// Objective value and gradient in normalized units (divided by the scale).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedObjective {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

/// `-(1/kappa) ln sum_i exp(-kappa x_i)`, evaluated with a shift so that it
/// never overflows. Lies in `[min x - ln(n)/kappa, min x]`.
pub fn softmin(x: &[f64], kappa: f64) -> f64 {
    let m = x.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = x.iter().map(|v| (-kappa * (v - m)).exp()).sum();
    m - s.ln() / kappa
}

/// `-softmin(x)` and the softmax weights that form its gradient.
fn softmin_weights(x: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let m = x.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = x.iter().map(|v| (-kappa * (v - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    (-(m - s.ln() / kappa), e.iter().map(|v| v / s).collect())
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64, kappa: f64) -> f64 {
    z.max(0.0) + (-(kappa * z).abs()).exp().ln_1p() / kappa
}

/// Softplus-smoothed `CVaR_alpha` of equiprobable outcomes `x` and its
/// weights `d value / d x_i = -w_i` (the `w_i` sum to one). The smoothed
/// value exceeds the exact one by at most `ln 2 / (alpha kappa)`.
pub(crate) fn smooth_cvar(x: &[f64], alpha: f64, kappa: f64) -> (f64, Vec<f64>) {
    let p = 1.0 / x.len() as f64;
    let mass = |c: f64| x.iter().map(|v| p * logistic(kappa * (c - v))).sum::<f64>();
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // The optimal threshold solves mass(c) = alpha; mass is increasing.
    let (mut lo, mut hi) = (min - 40.0 / kappa, max + 40.0 / kappa);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let value = -c + x.iter().map(|v| p * softplus(c - v, kappa)).sum::<f64>() / alpha;
    let w = x.iter().map(|v| p * logistic(kappa * (c - v)) / alpha).collect();
    (value, w)
}

impl Objective {
    pub fn name(&self) -> String {
        match self {
            Objective::CVaR(a) => format!("cvar({a})"),
            Objective::Expected => "expected".into(),
            Objective::WorstCase => "worst_case".into(),
            Objective::OffsetWorstCase { .. } => "offset_worst_case".into(),
        }
    }

    pub fn validate(&self, n_scenarios: usize) -> Result<(), OptError> {
        match self {
            Objective::CVaR(a) if !(0.0..=1.0).contains(a) => {
                Err(OptError::InvalidProblem(format!("risk level {a} outside [0, 1]")))
            }
            Objective::OffsetWorstCase { reference } if reference.len() != n_scenarios => {
                Err(OptError::InvalidProblem(format!(
                    "reference has {} scenarios, model has {n_scenarios}",
                    reference.len()
                )))
            }
            Objective::OffsetWorstCase { reference } if reference.iter().any(|r| !r.is_finite()) => {
                Err(OptError::InvalidProblem("reference profits must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Continuation stages with increasing sharpness followed by the exact
    /// objective. Level-based objectives are smoothed only when
    /// `smooth_levels` is set.
    pub fn stages(&self, kappas: &[f64], smooth_levels: bool) -> Vec<Smoothing> {
        let smooth = match self.level() {
            None => true,
            Some(a) => smooth_levels && a < 1.0,
        };
        let stages = if smooth { kappas } else { &[] };
        stages.iter().map(|&k| Smoothing::Smoothed(k)).chain([Smoothing::Exact]).collect()
    }

    fn level(&self) -> Option<f64> {
        match self {
            Objective::CVaR(a) => Some(*a),
            Objective::Expected => Some(1.0),
            Objective::WorstCase => Some(0.0),
            Objective::OffsetWorstCase { .. } => None,
        }
    }

    /// Evaluates `R(psi) / scale` and, when `rows` (the profit Jacobian) is
    /// given, its (sub)gradient.
    pub fn evaluate(
        &self,
        profits: &[f64],
        rows: Option<&[Vec<f64>]>,
        smoothing: Smoothing,
        scale: f64,
    ) -> Result<EvaluatedObjective, OptError> {
        let combine = |weights: &[f64], sign: f64| {
            rows.map(|rows| {
                let mut g = vec![0.0; rows.first().map_or(0, |r| r.len())];
                for (w, row) in weights.iter().zip(rows) {
                    if *w != 0.0 {
                        for (gc, d) in g.iter_mut().zip(row) {
                            *gc += sign * w * d / scale;
                        }
                    }
                }
                g
            })
        };
        if let (Some(alpha), Smoothing::Smoothed(kappa)) = (self.level(), smoothing) {
            if alpha < 1.0 {
                let x: Vec<f64> = profits.iter().map(|p| p / scale).collect();
                let (value, w) = if alpha == 0.0 { softmin_weights(&x, kappa) } else { smooth_cvar(&x, alpha, kappa) };
                return Ok(EvaluatedObjective { value, gradient: combine(&w, -1.0) });
            }
        }
        if let Some(alpha) = self.level() {
            let d = ScenarioDistribution::new(profits.to_vec())?;
            let level = RiskLevel::new(alpha)?;
            let value = cvar_risk(&d, level) / scale;
            let gradient = if rows.is_some() { combine(&normalized_tail_weights(&d, level), -1.0) } else { None };
            return Ok(EvaluatedObjective { value, gradient });
        }
        let Objective::OffsetWorstCase { reference } = self else { unreachable!() };
        let x: Vec<f64> = profits.iter().zip(reference).map(|(p, r)| (p - r) / scale).collect();
        match smoothing {
            Smoothing::Exact => {
                let mut worst = 0;
                for (i, v) in x.iter().enumerate() {
                    if *v < x[worst] {
                        worst = i;
                    }
                }
                let mut w = vec![0.0; x.len()];
                w[worst] = 1.0;
                Ok(EvaluatedObjective { value: 0.0 - x[worst], gradient: combine(&w, -1.0) })
            }
            Smoothing::Smoothed(kappa) => {
                let (value, w) = softmin_weights(&x, kappa);
                Ok(EvaluatedObjective { value, gradient: combine(&w, -1.0) })
            }
        }
    }
}

/// `CVaR_alpha(psi(u))` and its subgradient in profit units. The inner
/// maximization over the auxiliary threshold is taken in closed form (the
/// quantile), leaving the discrete tail weights.
pub fn cvar_objective(
    model: &dyn ProfitModel,
    u: &[f64],
    alpha: f64,
    fd_step: f64,
) -> Result<(f64, Vec<f64>), OptError> {
    let objective = Objective::CVaR(alpha);
    objective.validate(model.n_scenarios())?;
    let jac = model.jacobian(u, fd_step)?;
    let e = objective.evaluate(&jac.profits, Some(&jac.rows), Smoothing::Exact, 1.0)?;
    Ok((e.value, e.gradient.unwrap_or_default()))
}

/// `-min_i (psi^i(u) - reference_i)` (exact or softmin-smoothed) and its
/// gradient in profit units.
pub fn offset_worstcase_objective(
    model: &dyn ProfitModel,
    u: &[f64],
    reference: &[f64],
    smoothing: Smoothing,
    fd_step: f64,
) -> Result<(f64, Vec<f64>), OptError> {
    let objective = Objective::OffsetWorstCase { reference: reference.to_vec() };
    objective.validate(model.n_scenarios())?;
    let jac = model.jacobian(u, fd_step)?;
    let e = objective.evaluate(&jac.profits, Some(&jac.rows), smoothing, 1.0)?;
    Ok((e.value, e.gradient.unwrap_or_default()))
}
