//! Risk measures on equiprobable discrete profit distributions.
//!
//! A [`ScenarioDistribution`] holds `n_d` profit outcomes, each with
//! probability `p = 1/n_d`. All measures follow the sign convention that a
//! risk value is a *negative* profit: `R(c) = -c` for a deterministic profit
//! `c`, and lower risk is better.
//!
//! Ordering uses a stable sort on `(value, scenario index)`, so ties resolve
//! to the lower scenario index. CVaR is tie-invariant; VaR and the tail
//! weights adopt that convention.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("empty distribution")]
    Empty,
    #[error("non-finite outcome {value} at scenario {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("risk level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error("mean-variance weight {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("invalid combination weights: {0}")]
    InvalidWeights(String),
    #[error("distribution length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Equiprobable discrete profit outcomes `psi^1 .. psi^n_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDistribution {
    outcomes: Vec<f64>,
}

impl ScenarioDistribution {
    pub fn new(outcomes: Vec<f64>) -> Result<Self, RiskError> {
        if outcomes.is_empty() {
            return Err(RiskError::Empty);
        }
        if let Some((index, &value)) = outcomes.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(RiskError::NonFinite { index, value });
        }
        Ok(Self { outcomes })
    }

    /// Constant distribution `{c, ..., c}` with `n` members.
    pub fn constant(c: f64, n: usize) -> Result<Self, RiskError> {
        Self::new(vec![c; n])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn into_outcomes(self) -> Vec<f64> {
        self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Scenario probability `p = 1/n_d`.
    pub fn probability(&self) -> f64 {
        1.0 / self.outcomes.len() as f64
    }

    /// Scenario indices `i_1, .., i_n_d` ordering the outcomes ascending.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.outcomes.len()).collect();
        // `sort_by` is stable, so equal values keep index order.
        idx.sort_by(|&a, &b| self.outcomes[a].total_cmp(&self.outcomes[b]));
        idx
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.outcomes.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.outcomes.len() as f64
    }

    /// Population variance (divides by `n_d`).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.outcomes.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.outcomes.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn min(&self) -> f64 {
        self.outcomes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.outcomes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.outcomes[0];
        self.outcomes.iter().all(|&x| x == first)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, RiskError> {
        Self::new(self.outcomes.iter().map(|x| x * factor).collect())
    }

    pub fn shifted(&self, c: f64) -> Result<Self, RiskError> {
        Self::new(self.outcomes.iter().map(|x| x + c).collect())
    }

    /// Scenario-wise sum `psi' + psi''`.
    pub fn add(&self, other: &Self) -> Result<Self, RiskError> {
        check_lengths(self.len(), other.len())?;
        Self::new(self.outcomes.iter().zip(&other.outcomes).map(|(a, b)| a + b).collect())
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), RiskError> {
    if left != right {
        return Err(RiskError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Risk level `alpha` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self, RiskError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(RiskError::InvalidLevel(alpha));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `floor(alpha / p)` with `alpha * n` snapped onto the integer grid when it
/// lies within a few ulps of it, so that `alpha = j/n` maps to `j`.
pub fn tail_count(alpha: f64, n: usize) -> usize {
    let x = alpha * n as f64;
    let r = x.round();
    let j = if (x - r).abs() <= 4.0 * f64::EPSILON * x.max(1.0) { r } else { x.floor() };
    j.max(0.0) as usize
}

/// `R(psi) = -E(psi)`.
pub fn expected_risk(d: &ScenarioDistribution) -> f64 {
    -d.mean()
}

/// `R(psi) = -min_i psi^i`.
pub fn worst_case_risk(d: &ScenarioDistribution) -> f64 {
    -d.min()
}

/// Value-at-risk: the negative lower `alpha`-quantile.
pub fn var_risk(d: &ScenarioDistribution, level: RiskLevel) -> f64 {
    let sorted = d.sorted();
    let n = sorted.len();
    let alpha = level.value();
    if alpha >= 1.0 {
        return -sorted[n - 1];
    }
    let j = tail_count(alpha, n).min(n - 1);
    -sorted[j]
}

/// Lower `alpha`-quantile `q(alpha) = -VaR_alpha`.
pub fn quantile(d: &ScenarioDistribution, level: RiskLevel) -> f64 {
    -var_risk(d, level)
}

/// Conditional value-at-risk: the negative average of the lowest `alpha`
/// fraction of outcomes, with a fractional weight on the boundary scenario.
pub fn cvar_risk(d: &ScenarioDistribution, level: RiskLevel) -> f64 {
    let alpha = level.value();
    if alpha >= 1.0 {
        return expected_risk(d);
    }
    let n = d.len();
    let j = tail_count(alpha, n);
    if j == 0 {
        return worst_case_risk(d);
    }
    let sorted = d.sorted();
    if j >= n {
        return expected_risk(d);
    }
    let p = d.probability();
    let head: f64 = sorted[..j].iter().sum();
    let boundary = (alpha - j as f64 * p).max(0.0);
    -(p * head + boundary * sorted[j]) / alpha
}

/// Tail weights `w_i` (indexed by scenario) with `CVaR_alpha = -(1/alpha) sum w_i psi^i`.
///
/// The lowest `j = floor(alpha/p)` scenarios get weight `p`, the next one
/// `alpha - j p`, the rest zero; `sum w_i = alpha`. At `alpha = 0` every weight
/// is zero (use [`normalized_tail_weights`] for the worst-case limit).
pub fn tail_weights(d: &ScenarioDistribution, level: RiskLevel) -> Vec<f64> {
    let n = d.len();
    let alpha = level.value();
    let p = d.probability();
    let order = d.sorted_indices();
    let mut w = vec![0.0; n];
    if alpha >= 1.0 {
        w.iter_mut().for_each(|x| *x = p);
        return w;
    }
    let j = tail_count(alpha, n).min(n);
    for &i in &order[..j] {
        w[i] = p;
    }
    if j < n {
        w[order[j]] = (alpha - j as f64 * p).max(0.0);
    }
    w
}

/// Tail weights divided by `alpha` (summing to one). For `alpha < p` this
/// is a unit weight on the worst scenario.
pub fn normalized_tail_weights(d: &ScenarioDistribution, level: RiskLevel) -> Vec<f64> {
    let n = d.len();
    let alpha = level.value();
    if alpha >= 1.0 {
        return vec![d.probability(); n];
    }
    if tail_count(alpha, n) == 0 {
        let mut w = vec![0.0; n];
        w[d.sorted_indices()[0]] = 1.0;
        return w;
    }
    tail_weights(d, level).into_iter().map(|x| x / alpha).collect()
}

/// `R(psi) = -(lambda E(psi) - (1 - lambda) var(psi))`.
pub fn mean_variance_risk(d: &ScenarioDistribution, lambda: f64) -> Result<f64, RiskError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RiskError::InvalidLambda(lambda));
    }
    Ok(-(lambda * d.mean() - (1.0 - lambda) * d.variance()))
}

/// Which risk functional to apply to a profit distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskSpec {
    Expected,
    WorstCase,
    VaR(RiskLevel),
    CVaR(RiskLevel),
    MeanVariance(f64),
    Combination(Vec<(f64, RiskSpec)>),
}

impl RiskSpec {
    pub fn evaluate(&self, d: &ScenarioDistribution) -> Result<f64, RiskError> {
        match self {
            RiskSpec::Expected => Ok(expected_risk(d)),
            RiskSpec::WorstCase => Ok(worst_case_risk(d)),
            RiskSpec::VaR(level) => Ok(var_risk(d, *level)),
            RiskSpec::CVaR(level) => Ok(cvar_risk(d, *level)),
            RiskSpec::MeanVariance(lambda) => mean_variance_risk(d, *lambda),
            RiskSpec::Combination(members) => combined_risk(d, members),
        }
    }
}

fn check_weights(members: &[(f64, RiskSpec)]) -> Result<f64, RiskError> {
    if members.is_empty() {
        return Err(RiskError::InvalidWeights("no members".into()));
    }
    let mut sum = 0.0;
    for (m, (w, _)) in members.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(RiskError::InvalidWeights(format!("weight {w} of member {m}")));
        }
        sum += w;
    }
    if sum <= 0.0 {
        return Err(RiskError::InvalidWeights("weights sum to zero".into()));
    }
    Ok(sum)
}

/// Weighted combination `sum_m lambda_m R_m(psi)`.
pub fn combined_risk(d: &ScenarioDistribution, members: &[(f64, RiskSpec)]) -> Result<f64, RiskError> {
    check_weights(members)?;
    members
        .iter()
        .try_fold(0.0, |acc, (w, spec)| Ok(acc + w * spec.evaluate(d)?))
}

/// Total measure `sum_m lambda_m R_m(psi) - (1 - sum_m lambda_m) E(psi)`.
///
/// Requires `lambda_m >= 0` and `0 < sum_m lambda_m <= 1`; the remaining
/// weight goes to the expected-profit member.
pub fn total_risk(d: &ScenarioDistribution, members: &[(f64, RiskSpec)]) -> Result<f64, RiskError> {
    let sum = check_weights(members)?;
    if sum > 1.0 + 1e-12 {
        return Err(RiskError::InvalidWeights(format!("weights sum to {sum} > 1")));
    }
    let rest = (1.0 - sum).max(0.0);
    Ok(combined_risk(d, members)? - rest * d.mean())
}

/// Equal-weight average of `CVaR_alpha` over the given levels.
pub fn average_cvar_risk(d: &ScenarioDistribution, levels: &[RiskLevel]) -> Result<f64, RiskError> {
    if levels.is_empty() {
        return Err(RiskError::InvalidWeights("no levels".into()));
    }
    let w = 1.0 / levels.len() as f64;
    let members: Vec<_> = levels.iter().map(|l| (w, RiskSpec::CVaR(*l))).collect();
    combined_risk(d, &members)
}

/// Eleven-level grid `{worst, 10%, .., 90%, 100%}`. The worst-case level is
/// `p/2` (0.5% at `n_d = 100`), which always lies inside `[0, p)`.
pub fn standard_risk_grid(n_d: usize) -> Vec<RiskLevel> {
    let worst = 0.5 / n_d.max(1) as f64;
    std::iter::once(worst)
        .chain((1..=10).map(|j| j as f64 / 10.0))
        .map(RiskLevel)
        .collect()
}

/// True iff the risk is no larger than that of a deterministic payoff `c_ref`.
pub fn acceptable(risk_value: f64, c_ref: f64) -> bool {
    risk_value <= -c_ref
}

/// Scenario-wise profit offsets `psi(u, theta_i) - psi(u_ref, theta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetDistribution {
    offsets: Vec<f64>,
}

impl OffsetDistribution {
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offsets as a profit distribution, e.g. for `CVaR_alpha(psi_off)`.
    pub fn to_distribution(&self) -> ScenarioDistribution {
        // Offsets of two valid distributions are finite and non-empty.
        ScenarioDistribution { outcomes: self.offsets.clone() }
    }
}

pub fn offset_distribution(
    d_opt: &ScenarioDistribution,
    d_ref: &ScenarioDistribution,
) -> Result<OffsetDistribution, RiskError> {
    check_lengths(d_opt.len(), d_ref.len())?;
    let offsets: Vec<f64> = d_opt.outcomes.iter().zip(&d_ref.outcomes).map(|(a, b)| a - b).collect();
    if let Some((index, &value)) = offsets.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(RiskError::NonFinite { index, value });
    }
    Ok(OffsetDistribution { offsets })
}

/// Summary of an offset distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetKpis {
    /// `Prob[psi_off < 0]`.
    pub beta: f64,
    /// Mean over negative offsets; `None` when no offset is negative.
    pub mean_negative: Option<f64>,
    /// Mean over non-negative offsets; `None` when every offset is negative.
    pub mean_nonnegative: Option<f64>,
    pub mean: f64,
    pub worst: f64,
}

pub fn offset_kpis(o: &OffsetDistribution) -> Result<OffsetKpis, RiskError> {
    let n = o.offsets.len();
    if n == 0 {
        return Err(RiskError::Empty);
    }
    let (neg, nonneg): (Vec<f64>, Vec<f64>) = o.offsets.iter().partition(|&&x| x < 0.0);
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(OffsetKpis {
        beta: neg.len() as f64 / n as f64,
        mean_negative: mean_of(&neg),
        mean_nonnegative: mean_of(&nonneg),
        mean: o.offsets.iter().sum::<f64>() / n as f64,
        worst: o.offsets.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Profit indicators reported per strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitKpis {
    pub worst: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub p5: f64,
    pub p95: f64,
    /// `-CVaR_30%`: mean of the lowest 30% of outcomes.
    pub neg_cvar30: f64,
}

impl ProfitKpis {
    pub fn from_distribution(d: &ScenarioDistribution) -> Self {
        let level = |a: f64| RiskLevel(a);
        Self {
            worst: d.min(),
            mean: d.mean(),
            std_dev: d.std_dev(),
            p5: quantile(d, level(0.05)),
            p95: quantile(d, level(0.95)),
            neg_cvar30: -cvar_risk(d, level(0.3)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dist(v: &[f64]) -> ScenarioDistribution {
        ScenarioDistribution::new(v.to_vec()).unwrap()
    }

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert_eq!(ScenarioDistribution::new(vec![]).unwrap_err().to_string(), "empty distribution");
        assert!(matches!(
            ScenarioDistribution::new(vec![1.0, f64::NAN]),
            Err(RiskError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn level_outside_unit_interval() {
        assert!(RiskLevel::new(-0.1).is_err());
        assert!(RiskLevel::new(1.0000001).is_err());
        assert!(RiskLevel::new(f64::NAN).is_err());
        assert!(RiskLevel::new(0.0).is_ok());
        assert!(RiskLevel::new(1.0).is_ok());
    }

    #[test]
    fn expected_examples() {
        assert_eq!(expected_risk(&dist(&[7.0, 7.0, 7.0])), -7.0);
        assert_eq!(expected_risk(&dist(&[1.0, 2.0, 3.0, 4.0])), -2.5);
        assert_eq!(expected_risk(&dist(&[-5.0])), 5.0);
    }

    #[test]
    fn worst_case_examples() {
        assert_eq!(worst_case_risk(&dist(&[10.0, 20.0, 30.0])), -10.0);
        assert_eq!(worst_case_risk(&dist(&[4.5])), -4.5);
        assert_eq!(worst_case_risk(&dist(&[-3.0, 7.0])), 3.0);
    }

    #[test]
    fn var_examples() {
        let d = dist(&[50.0, 10.0, 40.0, 20.0, 30.0]);
        assert_eq!(var_risk(&d, lvl(0.3)), -20.0);
        assert_eq!(var_risk(&d, lvl(0.0)), -10.0);
        assert_eq!(var_risk(&d, lvl(1.0)), -50.0);
        // jp boundaries move to the next outcome
        assert_eq!(var_risk(&d, lvl(0.6)), -40.0);
        assert_eq!(var_risk(&d, lvl(0.2)), -20.0);
    }

    #[test]
    fn cvar_examples() {
        let d = dist(&[3.0, 1.0, 4.0, 2.0]);
        assert_relative_eq!(cvar_risk(&d, lvl(0.5)), -1.5, epsilon = 1e-15);
        assert_eq!(cvar_risk(&d, lvl(1.0)), -2.5);
        assert_eq!(cvar_risk(&d, lvl(0.1)), -1.0);
        assert_relative_eq!(cvar_risk(&d, lvl(0.375)), -4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_variance_examples() {
        assert_relative_eq!(mean_variance_risk(&dist(&[3.0, 3.0]), 0.5).unwrap(), -1.5);
        let d = dist(&[0.5, 9.0, -2.0]);
        assert_eq!(mean_variance_risk(&d, 1.0).unwrap(), expected_risk(&d));
        assert_eq!(mean_variance_risk(&dist(&[0.0, 2.0]), 0.5).unwrap(), 0.0);
        assert!(mean_variance_risk(&d, 1.5).is_err());
    }

    #[test]
    fn total_risk_examples() {
        let d = dist(&[0.0, 2.0]);
        let c50 = cvar_risk(&d, lvl(0.5));
        assert_eq!(c50, 0.0);
        let r = total_risk(&d, &[(0.5, RiskSpec::CVaR(lvl(0.5)))]).unwrap();
        assert_relative_eq!(r, -0.5);
        let single = combined_risk(&d, &[(1.0, RiskSpec::WorstCase)]).unwrap();
        assert_eq!(single, worst_case_risk(&d));
    }

    #[test]
    fn invalid_combination_weights() {
        let d = dist(&[1.0, 2.0]);
        let err = combined_risk(&d, &[(-0.1, RiskSpec::Expected)]).unwrap_err();
        assert!(err.to_string().starts_with("invalid combination weights"));
        assert!(combined_risk(&d, &[(0.0, RiskSpec::Expected)]).is_err());
        assert!(total_risk(&d, &[(0.7, RiskSpec::WorstCase), (0.6, RiskSpec::Expected)]).is_err());
        assert!(combined_risk(&d, &[]).is_err());
    }

    #[test]
    fn offset_examples() {
        let a = dist(&[5.0, 7.0]);
        let b = dist(&[4.0, 8.0]);
        assert_eq!(offset_distribution(&a, &b).unwrap().offsets(), &[1.0, -1.0]);
        assert!(offset_distribution(&a, &a).unwrap().offsets().iter().all(|&x| x == 0.0));
        let zero = ScenarioDistribution::constant(0.0, 2).unwrap();
        assert_eq!(offset_distribution(&a, &zero).unwrap().offsets(), a.outcomes());
        let c = dist(&[1.0]);
        assert!(matches!(offset_distribution(&a, &c), Err(RiskError::LengthMismatch { .. })));
    }

    #[test]
    fn offset_kpi_examples() {
        let zeros = offset_distribution(&dist(&[1.0, 2.0]), &dist(&[1.0, 2.0])).unwrap();
        let k = offset_kpis(&zeros).unwrap();
        assert_eq!(k.beta, 0.0);
        assert_eq!(k.mean_negative, None);
        assert_eq!(k.mean_nonnegative, Some(0.0));
        assert_eq!(k.worst, 0.0);

        let o = offset_distribution(&dist(&[1.0, -1.0, 2.0, -2.0]), &ScenarioDistribution::constant(0.0, 4).unwrap())
            .unwrap();
        let k = offset_kpis(&o).unwrap();
        assert_eq!(k.beta, 0.5);
        assert_eq!(k.mean_negative, Some(-1.5));
        assert_eq!(k.mean_nonnegative, Some(1.5));
        assert_eq!(k.worst, -2.0);

        let o = offset_distribution(&dist(&[3.0]), &dist(&[0.0])).unwrap();
        let k = offset_kpis(&o).unwrap();
        assert_eq!((k.beta, k.mean_nonnegative, k.worst), (0.0, Some(3.0), 3.0));
    }

    #[test]
    fn acceptable_examples() {
        assert!(acceptable(-5.0, 4.0));
        assert!(acceptable(-3.0, 3.0));
        assert!(!acceptable(0.0, 1.0));
    }

    #[test]
    fn tail_weights_sum_to_alpha() {
        let d = dist(&[4.0, -1.0, 3.0, 3.0, 0.5, 8.0, 2.0]);
        for k in 0..=70 {
            let a = k as f64 / 70.0;
            let w = tail_weights(&d, lvl(a));
            assert!(w.iter().all(|&x| x >= 0.0));
            assert_relative_eq!(w.iter().sum::<f64>(), a, epsilon = 1e-14);
            if a > 0.0 {
                let v = -w.iter().zip(d.outcomes()).map(|(w, x)| w * x).sum::<f64>() / a;
                assert_relative_eq!(v, cvar_risk(&d, lvl(a)), epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        let d = dist(&[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(d.sorted_indices(), vec![1, 2, 0, 3]);
        let w = normalized_tail_weights(&d, lvl(0.1));
        assert_eq!(w, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn risk_grid_worst_level_below_p() {
        let g = standard_risk_grid(20);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0].value(), 0.025);
        assert_eq!(standard_risk_grid(100)[0].value(), 0.005);
        assert_eq!(g[10].value(), 1.0);
    }

    #[test]
    fn profit_kpis_of_constant() {
        let k = ProfitKpis::from_distribution(&ScenarioDistribution::constant(2.5, 9).unwrap());
        assert_eq!((k.worst, k.mean, k.std_dev, k.p5, k.p95, k.neg_cvar30), (2.5, 2.5, 0.0, 2.5, 2.5, 2.5));
    }
}
