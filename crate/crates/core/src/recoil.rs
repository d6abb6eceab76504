//! Spontaneous-emission jumps with photon recoil.
//!
//! A jump applies `C = (X + iY) exp(i mu (eps_x X + eps_y Y))`, where
//! `(eps_x, eps_y)` is the transverse part of the emission direction drawn
//! from the dipole pattern `(3 / 16 pi)(1 + cos^2 theta)`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock2d::TruncatedState;
use crate::params::DimensionlessParams;
use crate::su11::ln_factorials;

/// Post-jump norm (relative to the pre-jump norm) below which the jump is
/// treated as having annihilated the state.
pub const DEGENERATE_NORM_SQ: f64 = 1e-12;

/// Photon emission direction in polar coordinates about the beam axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionDirection {
    pub theta: f64,
    pub phi: f64,
}

impl EmissionDirection {
    /// Maps two uniform variates on `[0, 1]` to a direction. `eps` inverts
    /// the polar CDF, `phi_u` scales to the azimuth.
    pub fn from_uniforms(eps: f64, phi_u: f64) -> Self {
        // u(1 - eps) = 1/u(eps); the reciprocal form avoids cancellation for eps > 1/2
        let a = 2.0 - 4.0 * eps;
        let root = (5.0 - 16.0 * eps + 16.0 * eps * eps).sqrt();
        let u = if a >= 0.0 { a + root } else { 1.0 / (root - a) };
        let c = (u.cbrt() - 1.0 / u.cbrt()).clamp(-1.0, 1.0);
        EmissionDirection { theta: c.acos(), phi: 2.0 * PI * phi_u }
    }

    pub fn eps_x(&self) -> f64 {
        self.theta.sin() * self.phi.cos()
    }

    pub fn eps_y(&self) -> f64 {
        self.theta.sin() * self.phi.sin()
    }

    /// Momentum transfer `(dPx, dPy)` in rescaled units.
    pub fn kick(&self, params: &DimensionlessParams) -> (f64, f64) {
        let k = params.kick();
        (k * self.eps_x(), k * self.eps_y())
    }
}

/// Draws an emission direction from the dipole pattern.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> EmissionDirection {
    let eps: f64 = rng.random();
    let phi_u: f64 = rng.random();
    EmissionDirection::from_uniforms(eps, phi_u)
}

/// `<m| exp(i b X) |n>` for `m, n < size`, with `X = sqrt(beta/2)(a + a^dag)`.
///
/// With `kappa = b sqrt(beta/2)`, `n> = max(m, n)` and `n< = min(m, n)`:
///
/// ```text
/// sqrt(n>!/n<!) e^{-kappa^2/2} sum_j C(n<, j) (i kappa)^{n> + n< - 2j} / (n> - j)!
/// ```
pub fn displacement_matrix(b: f64, beta: f64, size: usize) -> Array2<Complex64> {
    let kappa = b * (beta / 2.0).sqrt();
    let lf = ln_factorials(2 * size);
    let ln_k = kappa.abs().ln();
    let base = -kappa * kappa / 2.0;
    let mut g = Array2::zeros((size, size));
    for m in 0..size {
        for n in 0..=m {
            let (hi, lo) = (m, n);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=lo {
                let p = hi + lo - 2 * j;
                let mag = if p == 0 {
                    0.0
                } else if kappa == 0.0 {
                    continue;
                } else {
                    p as f64 * ln_k
                };
                let ln_t = base + 0.5 * (lf[hi] - lf[lo]) + lf[lo] - lf[j] - lf[lo - j] - lf[hi - j] + mag;
                let sign = if kappa < 0.0 && p % 2 == 1 { -1.0 } else { 1.0 };
                acc += i_pow(p) * (sign * ln_t.exp());
            }
            g[[m, n]] = acc;
            g[[n, m]] = acc;
        }
    }
    g
}

fn i_pow(p: usize) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `<m| X exp(i b X) |n>` for `m, n < size`.
pub fn kick_position_matrix(b: f64, beta: f64, size: usize) -> Array2<Complex64> {
    position_times(&displacement_matrix(b, beta, size + 1), beta, size)
}

/// `X G` on `size` levels from a displacement matrix `G` of `size + 1` levels.
fn position_times(g: &Array2<Complex64>, beta: f64, size: usize) -> Array2<Complex64> {
    let s = (beta / 2.0).sqrt();
    Array2::from_shape_fn((size, size), |(m, n)| {
        let up = g[[m + 1, n]] * ((m + 1) as f64).sqrt();
        let down = if m > 0 { g[[m - 1, n]] * (m as f64).sqrt() } else { Complex64::new(0.0, 0.0) };
        (up + down) * s
    })
}

/// The four single-mode factors of one jump.
#[derive(Debug, Clone)]
pub struct JumpMatrices {
    pub fx: Array2<Complex64>,
    pub gx: Array2<Complex64>,
    pub fy: Array2<Complex64>,
    pub gy: Array2<Complex64>,
}

impl JumpMatrices {
    pub fn new(direction: &EmissionDirection, params: &DimensionlessParams, cutoff: usize) -> Self {
        let beta = params.beta();
        let bx = params.mu() * direction.eps_x();
        let by = params.mu() * direction.eps_y();
        let gx_big = displacement_matrix(bx, beta, cutoff + 1);
        let gy_big = displacement_matrix(by, beta, cutoff + 1);
        let fx = position_times(&gx_big, beta, cutoff);
        let fy = position_times(&gy_big, beta, cutoff);
        let trim = |g: Array2<Complex64>| g.slice(ndarray::s![..cutoff, ..cutoff]).to_owned();
        JumpMatrices { fx, gx: trim(gx_big), fy, gy: trim(gy_big) }
    }

    /// Unnormalized `C psi`.
    pub fn act(&self, state: &TruncatedState) -> Result<TruncatedState> {
        let n = self.fx.nrows();
        if state.cutoff() != n {
            return Err(Error::CutoffMismatch { expected: n, got: state.cutoff() });
        }
        let a = state.coeffs();
        let b = self.fx.dot(a).dot(&self.gy.t()) + self.gx.dot(a).dot(&self.fy.t()) * Complex64::new(0.0, 1.0);
        Ok(TruncatedState::from_parts(b, state.beta()))
    }
}

/// Applies a jump in `direction` and renormalizes.
pub fn apply_jump(
    state: &TruncatedState,
    direction: &EmissionDirection,
    params: &DimensionlessParams,
) -> Result<TruncatedState> {
    let before = state.norm_sq();
    let mut out = JumpMatrices::new(direction, params, state.cutoff()).act(state)?;
    let ratio = out.norm_sq() / before;
    if !(ratio >= DEGENERATE_NORM_SQ) {
        return Err(Error::DegenerateJump { norm_sq: ratio });
    }
    out.normalize()?;
    Ok(out)
}
