//! Position variance of the recoil-free model without dissipative cross
//! terms, in the high-temperature Caldeira-Leggett limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CLParams {
    pub sigma_bar: f64,
    pub eta_bar: f64,
    pub beta: f64,
}

impl CLParams {
    pub fn new(sigma_bar: f64, eta_bar: f64, beta: f64) -> Result<Self> {
        let p = Self { sigma_bar, eta_bar, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn reference() -> Self {
        Self { sigma_bar: 0.35, eta_bar: 0.0125, beta: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_bar > 0.0
            && self.sigma_bar.is_finite()
            && self.eta_bar >= 0.0
            && self.eta_bar.is_finite()
            && self.beta > 0.0
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid Caldeira-Leggett parameters {self:?}")))
        }
    }
}

/// `<x^2>(tau)` for a centred initial Gaussian of width `sigma_bar`.
pub fn cl_variance(tau: f64, p: &CLParams) -> f64 {
    let (s, c) = tau.sin_cos();
    let s2 = p.sigma_bar * p.sigma_bar;
    let b2 = p.beta * p.beta;
    s2 * c * c + p.eta_bar * b2 * (tau - 0.5 * (2.0 * tau).sin()) + b2 / (4.0 * s2) * s * s
}

/// Noise-kernel coefficients `(A, B, C)` of the reduced propagator.
pub fn cl_coefficients(nu: f64, eta: f64, omega_r: f64) -> Result<(f64, f64, f64)> {
    let s = nu.sin();
    let k = (nu / std::f64::consts::PI).round();
    if (nu - k * std::f64::consts::PI).abs() < 1e-12 * nu.abs().max(1.0) {
        return Err(Error::SingularCoefficients { nu });
    }
    let s2 = s * s;
    let a = eta * (nu - (2.0 * nu).sin()) / (2.0 * omega_r * s2);
    let b = eta * (s - nu * nu.cos()) / (omega_r * s2);
    let c = eta * (nu - 0.5 * (2.0 * nu).sin()) / (2.0 * omega_r * s2);
    Ok((a, b, c))
}

/// `<x^2>` assembled from the Gaussian kernel coefficients instead of the
/// closed form; singular at `tau = k pi`.
pub fn cl_variance_from_kernel(tau: f64, p: &CLParams) -> Result<f64> {
    let omega = p.beta;
    let eta = p.eta_bar * p.beta.powi(3);
    let (_, _, c) = cl_coefficients(tau, eta, omega)?;
    let sigma = p.sigma_bar / p.beta;
    let a = 1.0 / (8.0 * sigma * sigma);
    let n = omega / (2.0 * tau.sin());
    let k = omega / tau.tan() / 2.0;
    let b_cal = n * n / (4.0 * (c + a + k * k / (4.0 * a)));
    Ok(p.beta * p.beta / (8.0 * b_cal))
}
