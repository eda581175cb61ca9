//! Risk measures of a small profit distribution: VaR and CVaR across
//! levels, the tail weights behind CVaR, a mean-variance value, the total
//! measure over the standard grid, and a profit-offset summary.

use riskflood::distrisk::{
    average_cvar_risk, cvar_risk, expected_risk, mean_variance_risk, normalized_tail_weights, offset_distribution,
    offset_kpis, standard_risk_grid, total_risk, var_risk, worst_case_risk, RiskLevel, RiskSpec, ScenarioDistribution,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // NPV outcomes (M USD) of ten equiprobable scenarios.
    let npv = ScenarioDistribution::new(vec![41.2, 44.9, 38.7, 46.1, 43.3, 45.0, 39.9, 47.4, 42.8, 44.1])?;
    println!("expected risk {:.3}, worst-case risk {:.3}", expected_risk(&npv), worst_case_risk(&npv));

    println!("alpha    VaR      CVaR");
    for a in [0.05, 0.1, 0.25, 0.5, 0.75, 1.0] {
        let l = RiskLevel::new(a)?;
        println!("{a:<5} {:>8.3} {:>8.3}", var_risk(&npv, l), cvar_risk(&npv, l));
    }

    let w = normalized_tail_weights(&npv, RiskLevel::new(0.25)?);
    println!("CVaR_0.25 tail weights: {w:.2?}");

    println!("mean-variance risk (lambda 0.8): {:.3}", mean_variance_risk(&npv, 0.8)?);
    let mix = [(0.5, RiskSpec::CVaR(RiskLevel::new(0.2)?)), (0.3, RiskSpec::WorstCase)];
    println!("total measure 0.5 CVaR_0.2 + 0.3 worst + 0.2 expected: {:.3}", total_risk(&npv, &mix)?);
    println!("average CVaR over the 11-level grid: {:.3}", average_cvar_risk(&npv, &standard_risk_grid(npv.len()))?);

    let reference = ScenarioDistribution::new(vec![40.0, 44.0, 39.5, 45.0, 43.0, 44.5, 40.5, 46.0, 43.5, 43.0])?;
    let k = offset_kpis(&offset_distribution(&npv, &reference)?)?;
    println!(
        "offset vs reference: mean {:.3}, worst {:.3}, beta {:.2}, mean negative {:?}",
        k.mean, k.worst, k.beta, k.mean_negative
    );
    Ok(())
}
