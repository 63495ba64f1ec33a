//! Point statistics and shrinkage estimators for a single mediation hypothesis.

use serde::{Deserialize, Serialize};

use crate::dist::std_normal_sf;
use crate::error::{invalid, Error, Result};

/// Observed coefficient estimates `(γ̂, β̂)` with per-observation scales.
///
/// The sampling sd of `gamma_hat` is `sigma_gamma / √n` (likewise for beta).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePair {
    pub gamma_hat: f64,
    pub beta_hat: f64,
    pub sigma_gamma: f64,
    pub sigma_beta: f64,
    pub n: u64,
}

impl EstimatePair {
    pub fn new(gamma_hat: f64, beta_hat: f64, sigma_gamma: f64, sigma_beta: f64, n: u64) -> Result<Self> {
        if !(sigma_gamma > 0.0 && sigma_gamma.is_finite()) || !(sigma_beta > 0.0 && sigma_beta.is_finite()) {
            return Err(invalid(format!(
                "scales must be positive, got sigma_gamma={sigma_gamma}, sigma_beta={sigma_beta}"
            )));
        }
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        if !gamma_hat.is_finite() || !beta_hat.is_finite() {
            return Err(invalid("estimates must be finite"));
        }
        Ok(Self { gamma_hat, beta_hat, sigma_gamma, sigma_beta, n })
    }

    /// Unit-scale pair, the convention of the asymptotic experiments.
    pub fn unit(gamma_hat: f64, beta_hat: f64, n: u64) -> Result<Self> {
        Self::new(gamma_hat, beta_hat, 1.0, 1.0, n)
    }

    pub fn gamma_pvalue(&self) -> f64 {
        two_sided(self.gamma_hat, self.sigma_gamma, self.n)
    }

    pub fn beta_pvalue(&self) -> f64 {
        two_sided(self.beta_hat, self.sigma_beta, self.n)
    }
}

/// `γ̂β̂`, the plug-in estimator of the indirect effect.
pub fn product_stat(e: &EstimatePair) -> f64 {
    e.gamma_hat * e.beta_hat
}

/// Sobel statistic `γ̂β̂ / √(σ_β²γ̂² + σ_γ²β̂²)`.
///
/// Undefined at `γ̂ = β̂ = 0`; that point returns [`Error::DegenerateInput`].
pub fn sobel_stat(e: &EstimatePair) -> Result<f64> {
    if e.gamma_hat == 0.0 && e.beta_hat == 0.0 {
        return Err(Error::DegenerateInput("Sobel statistic is 0/0 at (0, 0)".into()));
    }
    let denom = (e.sigma_beta * e.gamma_hat).hypot(e.sigma_gamma * e.beta_hat);
    Ok(e.gamma_hat * e.beta_hat / denom)
}

/// Likelihood-ratio statistic `γ̂² + β̂²`.
pub fn norm2_stat(e: &EstimatePair) -> f64 {
    e.gamma_hat * e.gamma_hat + e.beta_hat * e.beta_hat
}

/// `min(|γ̂|, |β̂|)`, equivalent to the joint-significance p-value ordering.
pub fn min_abs_stat(e: &EstimatePair) -> f64 {
    e.gamma_hat.abs().min(e.beta_hat.abs())
}

fn two_sided(estimate: f64, sigma: f64, n: u64) -> f64 {
    let z = (n as f64).sqrt() * estimate.abs() / sigma;
    // z is finite for finite inputs; an overflowing z gives p = 0.
    if z.is_finite() {
        (2.0 * std_normal_sf(z).expect("finite z")).min(1.0)
    } else {
        0.0
    }
}

/// Two-sided z-test p-value `2(1 − Φ(√n |estimate| / σ))`.
pub fn coord_pvalue(estimate: f64, sigma: f64, n: u64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !estimate.is_finite() {
        return Err(invalid(format!("estimate must be finite, got {estimate}")));
    }
    Ok(two_sided(estimate, sigma, n))
}

/// Joint-significance p-value `max(p_γ, p_β)`.
pub fn joint_pvalue(e: &EstimatePair) -> f64 {
    e.gamma_pvalue().max(e.beta_pvalue())
}

/// Hodges' estimator: keeps `mean_estimate` only when `|mean_estimate| > n^(−1/4)`.
pub fn hodges(mean_estimate: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let threshold = (n as f64).powf(-0.25);
    Ok(if mean_estimate.abs() > threshold { mean_estimate } else { 0.0 })
}

/// Indicator shrinkage: `psi0` when the hypothesis was filtered, `t` otherwise.
pub fn shrink(t: f64, filtered: bool, psi0: f64) -> f64 {
    if filtered {
        psi0
    } else {
        t
    }
}

/// Weighted shrinkage `(t − psi0)·weight + psi0` with `weight ∈ [0, 1]`.
pub fn shrink_general(t: f64, weight: f64, psi0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(invalid(format!("shrinkage weight must be in [0,1], got {weight}")));
    }
    // the endpoints are returned exactly so the indicator form is a special case
    Ok(if weight == 1.0 {
        t
    } else if weight == 0.0 {
        psi0
    } else {
        (t - psi0) * weight + psi0
    })
}
