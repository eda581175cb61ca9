//! Analytic profit families for checking the optimizers without a
//! simulator.

use super::{OptError, ProfitJacobian, ProfitModel};

/// `psi_i(u) = -|u - theta_i|^2` on a box.
#[derive(Debug, Clone)]
pub struct QuadraticFamily {
    pub thetas: Vec<Vec<f64>>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl ProfitModel for QuadraticFamily {
    fn n_controls(&self) -> usize {
        self.lb.len()
    }

    fn n_scenarios(&self) -> usize {
        self.thetas.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn profits(&self, u: &[f64]) -> Result<Vec<f64>, OptError> {
        Ok(self.thetas.iter().map(|t| -t.iter().zip(u).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()).collect())
    }

    fn jacobian(&self, u: &[f64], _fd_step: f64) -> Result<ProfitJacobian, OptError> {
        Ok(ProfitJacobian {
            profits: self.profits(u)?,
            rows: self.thetas.iter().map(|t| t.iter().zip(u).map(|(a, b)| -2.0 * (b - a)).collect()).collect(),
        })
    }
}

/// `psi_i(u) = theta_i . u` on a box.
#[derive(Debug, Clone)]
pub struct LinearFamily {
    pub thetas: Vec<Vec<f64>>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl ProfitModel for LinearFamily {
    fn n_controls(&self) -> usize {
        self.lb.len()
    }

    fn n_scenarios(&self) -> usize {
        self.thetas.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn profits(&self, u: &[f64]) -> Result<Vec<f64>, OptError> {
        Ok(self.thetas.iter().map(|t| t.iter().zip(u).map(|(a, b)| a * b).sum()).collect())
    }

    fn jacobian(&self, u: &[f64], _fd_step: f64) -> Result<ProfitJacobian, OptError> {
        Ok(ProfitJacobian { profits: self.profits(u)?, rows: self.thetas.clone() })
    }
}

/// Wraps a closure `u -> profits`; derivatives come from finite
/// differences.
pub struct FnFamily<F> {
    pub f: F,
    pub n_scenarios: usize,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl<F> ProfitModel for FnFamily<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn n_controls(&self) -> usize {
        self.lb.len()
    }

    fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn profits(&self, u: &[f64]) -> Result<Vec<f64>, OptError> {
        Ok((self.f)(u))
    }
}
