//! Black-Scholes market with a constant riskless rate and m risky assets.

use crate::error::{PharaError, Result};
use crate::rng::PathRng;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Eigenvalue ratio below which `sigma sigma^T` is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub r: f64,
    pub mu: Vec<f64>,
    /// Row-major volatility matrix.
    pub sigma: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// Validated market parameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct MarketParams {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub horizon: f64,
    /// Market price of risk, the solution of `sigma theta = mu - r 1`.
    pub theta: DVector<f64>,
    pub theta_norm: f64,
    /// `(sigma^T)^{-1} theta`, the direction shared by every optimal portfolio.
    pub direction: DVector<f64>,
}

pub fn build_market(r: f64, mu: &[f64], sigma: &[Vec<f64>], horizon: f64) -> Result<MarketParams> {
    let m = mu.len();
    if m == 0 {
        return Err(PharaError::BadDimension("need at least one risky asset".into()));
    }
    if sigma.len() != m || sigma.iter().any(|row| row.len() != m) {
        return Err(PharaError::BadDimension(format!("sigma must be {m}x{m} to match mu")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(PharaError::BadTime { t: horizon, horizon });
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(PharaError::Scenario(format!("riskless rate must be positive, got {r}")));
    }
    for (index, &mu_i) in mu.iter().enumerate() {
        if !(mu_i > r) {
            return Err(PharaError::DriftBelowRate { index, mu: mu_i, r });
        }
    }
    let sigma = DMatrix::from_fn(m, m, |i, j| sigma[i][j]);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(PharaError::BadDimension("sigma has non-finite entries".into()));
    }
    let gram = &sigma * sigma.transpose();
    let eig = gram.symmetric_eigen().eigenvalues;
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min_eig > SINGULAR_RATIO * max_eig) {
        return Err(PharaError::SingularVolatility { min_eig, max_eig });
    }
    let mu = DVector::from_column_slice(mu);
    let excess = mu.map(|v| v - r);
    let lu = sigma.clone().lu();
    let theta = lu
        .solve(&excess)
        .ok_or(PharaError::SingularVolatility { min_eig, max_eig })?;
    let direction = sigma
        .transpose()
        .lu()
        .solve(&theta)
        .ok_or(PharaError::SingularVolatility { min_eig, max_eig })?;
    let theta_norm = theta.norm();
    Ok(MarketParams { r, mu, sigma, horizon, theta, theta_norm, direction })
}

impl MarketParams {
    pub fn from_spec(spec: &MarketSpec) -> Result<Self> {
        build_market(spec.r, &spec.mu, &spec.sigma, spec.horizon)
    }

    pub fn to_spec(&self) -> MarketSpec {
        let m = self.dim();
        MarketSpec {
            r: self.r,
            mu: self.mu.iter().cloned().collect(),
            sigma: (0..m).map(|i| (0..m).map(|j| self.sigma[(i, j)]).collect()).collect(),
            horizon: self.horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Remaining time `T - t`; errors unless `0 <= t < T`.
    pub fn time_to_go(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(PharaError::BadTime { t, horizon: self.horizon });
        }
        Ok(self.horizon - t)
    }

    /// Pricing kernel `xi_t` given the Brownian position `w = W_t`.
    pub fn kernel_value(&self, t: f64, w: &[f64]) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(PharaError::BadTime { t, horizon: self.horizon });
        }
        if w.len() != self.dim() {
            return Err(PharaError::BadDimension(format!("w has length {}, expected {}", w.len(), self.dim())));
        }
        let tw: f64 = self.theta.iter().zip(w).map(|(a, b)| a * b).sum();
        Ok((-(self.r + 0.5 * self.theta_norm.powi(2)) * t - tw).exp())
    }

    /// `xi_T` given `xi_t` and a standard normal `z` driving the increment.
    pub fn terminal_kernel_from_normal(&self, t: f64, xi_t: f64, z: f64) -> f64 {
        let tau = self.horizon - t;
        xi_t * (-(self.r + 0.5 * self.theta_norm.powi(2)) * tau - self.theta_norm * tau.sqrt() * z).exp()
    }

    /// `n_paths` draws of `xi_T` conditional on `xi_t`. Path `i` uses stream
    /// `i` of the seeded generator.
    pub fn sample_kernel_terminal(&self, t: f64, xi_t: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
        self.time_to_go(t)?;
        if !(xi_t > 0.0) {
            return Err(PharaError::Scenario(format!("xi_t must be positive, got {xi_t}")));
        }
        Ok((0..n_paths)
            .into_par_iter()
            .map(|i| {
                let z = PathRng::new(seed, i as u64).normal();
                self.terminal_kernel_from_normal(t, xi_t, z)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_market() -> MarketParams {
        build_market(0.05, &[0.086], &[vec![0.3]], 10.0).unwrap()
    }

    #[test]
    fn theta_one_dimensional() {
        let m = base_market();
        assert!((m.theta[0] - 0.12).abs() < 1e-15);
        let m = build_market(0.05, &[0.35], &[vec![0.3]], 1.0).unwrap();
        assert!((m.theta[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theta_diagonal_two_assets() {
        let m = build_market(0.05, &[0.09, 0.13], &[vec![0.2, 0.0], vec![0.0, 0.4]], 1.0).unwrap();
        assert!((m.theta[0] - 0.2).abs() < 1e-15);
        assert!((m.theta[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn theta_reconstruction_residual() {
        let sigma = vec![vec![0.25, 0.05, 0.0], vec![0.1, 0.3, 0.02], vec![-0.05, 0.04, 0.2]];
        let mu = [0.08, 0.1, 0.07];
        let m = build_market(0.03, &mu, &sigma, 2.0).unwrap();
        let excess = m.mu.map(|v| v - m.r);
        let res = (&m.sigma * &m.theta - &excess).norm() / excess.norm();
        assert!(res <= 1e-12);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            build_market(0.05, &[0.04], &[vec![0.3]], 1.0),
            Err(PharaError::DriftBelowRate { .. })
        ));
        assert!(matches!(
            build_market(0.05, &[0.1, 0.1], &[vec![0.3, 0.3], vec![0.3, 0.3]], 1.0),
            Err(PharaError::SingularVolatility { .. })
        ));
        assert!(matches!(build_market(0.05, &[0.1], &[vec![0.3, 0.1]], 1.0), Err(PharaError::BadDimension(_))));
        assert!(matches!(build_market(0.05, &[0.1], &[vec![0.3]], 0.0), Err(PharaError::BadTime { .. })));
    }

    #[test]
    fn kernel_values() {
        let m = base_market();
        assert_eq!(m.kernel_value(0.0, &[0.0]).unwrap(), 1.0);
        let v = m.kernel_value(10.0, &[0.0]).unwrap();
        assert!((v - (-0.572f64).exp()).abs() < 1e-15);
        let w = -(0.05 + 0.0072) * 3.0 / 0.12;
        assert!((m.kernel_value(3.0, &[w]).unwrap() - 1.0).abs() < 1e-14);
        assert!(m.kernel_value(1.0, &[0.5]).unwrap() < m.kernel_value(1.0, &[0.4]).unwrap());
    }

    #[test]
    fn zero_noise_terminal_kernel() {
        let m = base_market();
        let v = m.terminal_kernel_from_normal(2.0, 1.3, 0.0);
        assert!((v - 1.3 * (-(0.05 + 0.0072) * 8.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = base_market();
        let a = m.sample_kernel_terminal(1.0, 1.0, 64, 11).unwrap();
        let b = m.sample_kernel_terminal(1.0, 1.0, 64, 11).unwrap();
        assert_eq!(a, b);
        assert!(m.sample_kernel_terminal(10.0, 1.0, 1, 0).is_err());
    }

    #[test]
    fn discounted_kernel_mean() {
        let m = base_market();
        let (t, n) = (4.0, 100_000);
        let draws = m.sample_kernel_terminal(t, 1.0, n, 2024).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let target = (-m.r * (m.horizon - t)).exp();
        assert!((mean - target).abs() <= 3.0 * se, "mean {mean} target {target} se {se}");
    }
}
