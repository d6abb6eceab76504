//! Analytic no-jump propagator in the Fock basis.
//!
//! Between jumps the state evolves under `exp(-i H_non tau / beta)` with
//!
//! ```text
//! H_non / beta = sum over modes of (1 - delta)(a^dag a + 1/2) - (delta/2)(a^dag^2 + a^2)
//! ```
//!
//! Each mode factor is the exponential of an element of su(1,1),
//! `x K0 + y (K+ + K-)` with `K0 = (a^dag a + 1/2)/2`, `K+ = a^dag^2 / 2`,
//! `K- = a^2 / 2`, `x = -2 i tau (1 - delta)` and `y = i tau delta`. It is
//! normal-ordered as `e^{g+ K+} e^{g0 K0} e^{g- K-}`, whose Fock elements are a
//! finite sum. For this normalization (`[K0, K+-] = +-K+-`,
//! `[K-, K+] = 2 K0`) the coefficients obey
//!
//! ```text
//! g-' = a- e^{g0},   g0' = a0 + 2 a- g+,   g+' = a+ + a0 g+ + a- g+^2
//! ```
//!
//! which integrate to the closed forms in [`disentangle`] with
//! `gamma^2 = a+ a- - (a0/2)^2 = tau^2 (1 - 2 delta)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock2d::TruncatedState;
use crate::params::DimensionlessParams;
use crate::roots::brent;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Normal-ordering coefficients of the single-mode propagator at time `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisentangledCoeffs {
    pub tau: f64,
    pub delta: Complex64,
    /// `gamma = tau sqrt(1 - 2 delta)`, principal branch.
    pub gamma: Complex64,
    pub g_plus: Complex64,
    pub g_zero: Complex64,
    pub g_minus: Complex64,
}

impl DisentangledCoeffs {
    pub fn a_zero(&self) -> Complex64 {
        -2.0 * I * self.tau * (ONE - self.delta)
    }

    pub fn a_plus(&self) -> Complex64 {
        I * self.tau * self.delta
    }

    pub fn a_minus(&self) -> Complex64 {
        self.a_plus()
    }
}

/// Closed-form disentangling coefficients.
pub fn disentangle(tau: f64, delta: Complex64) -> Result<DisentangledCoeffs> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParams(format!("tau must be finite and non-negative, got {tau}")));
    }
    let zero = Complex64::new(0.0, 0.0);
    if tau == 0.0 {
        return Ok(DisentangledCoeffs { tau, delta, gamma: zero, g_plus: zero, g_zero: zero, g_minus: zero });
    }
    let half_a0 = -I * tau * (ONE - delta);
    let a_pm = I * tau * delta;
    let gamma = tau * (ONE - 2.0 * delta).sqrt();

    let t = tan_over(gamma);
    let denom = ONE - half_a0 * t;
    if denom.norm() < 1e-300 || !denom.re.is_finite() || !denom.im.is_finite() {
        return Err(Error::Singularity { tau });
    }
    let g_plus = a_pm * t / denom;
    let g_minus = g_plus;

    // g0 = -2 ln w with w = cos(gamma) - (a0/2) sin(gamma)/gamma; w(0) = 1 and
    // the logarithm is continued along [0, tau] so g0 is continuous in tau.
    let w_at = |s: f64| {
        let gam = s * (ONE - 2.0 * delta).sqrt();
        gam.cos() - (-I * s * (ONE - delta)) * sin_over(gam)
    };
    let w = w_at(tau);
    if w.norm() < 1e-300 {
        return Err(Error::Singularity { tau });
    }
    let steps = (tau / 0.25).ceil().max(1.0) as usize;
    let mut phase = 0.0;
    let mut prev = ONE;
    for k in 1..=steps {
        let cur = if k == steps { w } else { w_at(tau * k as f64 / steps as f64) };
        if cur.norm() < 1e-300 {
            return Err(Error::Singularity { tau });
        }
        phase += (cur / prev).arg();
        prev = cur;
    }
    let log_w = Complex64::new(w.norm().ln(), phase);
    let g_zero = -2.0 * log_w;
    Ok(DisentangledCoeffs { tau, delta, gamma, g_plus, g_zero, g_minus })
}

/// `tan(z)/z`, regular at the origin.
fn tan_over(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        ONE + z2 / 3.0 + z2 * z2 * (2.0 / 15.0)
    } else {
        z.tan() / z
    }
}

/// `sin(z)/z`, regular at the origin.
fn sin_over(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        ONE - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Per-mode Fock matrix of `exp(-i tau [(1-delta) a^dag a - (delta/2)(a^dag^2 + a^2)])`
/// on `N` levels, together with the two-mode prefactor `e^{-i tau (1 - delta)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorMatrix {
    pub tau: f64,
    pub elements: Array2<Complex64>,
    pub global_phase: Complex64,
}

impl PropagatorMatrix {
    pub fn cutoff(&self) -> usize {
        self.elements.nrows()
    }
}

/// `ln(n!)` for `n <= max`.
pub(crate) fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..=max {
        acc += (n as f64).ln();
        out.push(acc);
    }
    out
}

/// Builds the per-mode matrix from the normal-ordered product.
///
/// With `c = e^{g0/2}`:
///
/// ```text
/// <m|e^{g+K+} e^{g0K0} e^{g-K-}|n> = e^{g0/4} sum_l (g+/2)^k (g-/2)^j c^l sqrt(m! n!) / (k! j! l!)
/// ```
///
/// over `l <= min(m, n)` with `m - l = 2k`, `n - l = 2j`. Terms are formed
/// from complex logarithms so large factorials never appear directly.
pub fn propagator_matrix(coeffs: &DisentangledCoeffs, cutoff: usize) -> Result<PropagatorMatrix> {
    let tau = coeffs.tau;
    let lf = ln_factorials(cutoff);
    let ln_half_gp = (coeffs.g_plus.norm() > 0.0).then(|| (coeffs.g_plus / 2.0).ln());
    let ln_half_gm = (coeffs.g_minus.norm() > 0.0).then(|| (coeffs.g_minus / 2.0).ln());
    let half_g0 = coeffs.g_zero / 2.0;
    // e^{g0/4} from the zero-point part of K0, e^{i tau (1-delta)/2} converts
    // the su(1,1) exponential into the a^dag a form.
    let prefactor = coeffs.g_zero / 4.0 + I * tau * (ONE - coeffs.delta) / 2.0;

    let mut elements = Array2::zeros((cutoff, cutoff));
    for m in 0..cutoff {
        for n in (m % 2..cutoff).step_by(2) {
            let mut acc = Complex64::new(0.0, 0.0);
            let lmin = m.min(n);
            let mut l = lmin;
            loop {
                let k = (m - l) / 2;
                let j = (n - l) / 2;
                let term = match (k, j, ln_half_gp, ln_half_gm) {
                    (k, _, None, _) if k > 0 => None,
                    (_, j, _, None) if j > 0 => None,
                    _ => {
                        let mut ln_t = prefactor + half_g0 * l as f64 + 0.5 * (lf[m] + lf[n]) - (lf[k] + lf[j] + lf[l]);
                        if k > 0 {
                            ln_t += ln_half_gp.unwrap() * k as f64;
                        }
                        if j > 0 {
                            ln_t += ln_half_gm.unwrap() * j as f64;
                        }
                        Some(ln_t)
                    }
                };
                if let Some(ln_t) = term {
                    if ln_t.re > 700.0 {
                        return Err(Error::NumericRange { tau });
                    }
                    acc += ln_t.exp();
                }
                if l < 2 {
                    break;
                }
                l -= 2;
            }
            if !acc.re.is_finite() || !acc.im.is_finite() {
                return Err(Error::NumericRange { tau });
            }
            elements[[m, n]] = acc;
        }
    }
    let global_phase = (-I * tau * (ONE - coeffs.delta)).exp();
    Ok(PropagatorMatrix { tau, elements, global_phase })
}

/// Convenience: disentangle and build in one step.
pub fn propagator(tau: f64, params: &DimensionlessParams, cutoff: usize) -> Result<PropagatorMatrix> {
    propagator_matrix(&disentangle(tau, params.delta())?, cutoff)
}

/// `B = global_phase * U A U^T`.
pub fn apply(u: &PropagatorMatrix, state: &TruncatedState) -> Result<TruncatedState> {
    if u.cutoff() != state.cutoff() {
        return Err(Error::CutoffMismatch { expected: u.cutoff(), got: state.cutoff() });
    }
    let b = u.elements.dot(state.coeffs()).dot(&u.elements.t()) * u.global_phase;
    Ok(TruncatedState::from_parts(b, state.beta()))
}

/// How the drawn uniform variate maps to the norm at which the next jump
/// occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalConvention {
    /// Jump when `<psi|psi> = zeta`.
    #[default]
    Standard,
    /// Jump when `|<psi|psi>|^2 = zeta`. This doubles the effective jump rate
    /// and does not unravel the same master equation; kept for comparison.
    Literal,
}

impl SurvivalConvention {
    /// Norm-squared threshold for a uniform draw.
    pub fn target(self, zeta: f64) -> f64 {
        match self {
            SurvivalConvention::Standard => zeta,
            SurvivalConvention::Literal => zeta.sqrt(),
        }
    }
}

/// Relative tolerance of the located jump time.
pub const WAITING_TIME_RTOL: f64 = 1e-10;

/// Time `s` in `(0, s_max]` at which `|U(s) psi|^2` falls to `target`, or
/// `None` if it stays above `target` through `s_max`. `state` need not be
/// normalized; the norm must start above `target`.
pub fn find_crossing(
    state: &TruncatedState,
    target: f64,
    params: &DimensionlessParams,
    s_max: f64,
    at_max: Option<&TruncatedState>,
) -> Result<Option<f64>> {
    let n0 = state.norm_sq();
    if n0 <= target {
        return Ok(Some(0.0));
    }
    let n_max = match at_max {
        Some(s) => s.norm_sq(),
        None => apply(&propagator(s_max, params, state.cutoff())?, state)?.norm_sq(),
    };
    if n_max > n0 * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::NonMonotoneSurvival(format!("norm^2 grew from {n0:.15e} to {n_max:.15e} over {s_max}")));
    }
    if n_max > target {
        return Ok(None);
    }
    let mut evals: Vec<(f64, f64)> = vec![(0.0, n0), (s_max, n_max)];
    let mut failure = None;
    let root = brent(
        |s| {
            if s <= 0.0 {
                return n0 - target;
            }
            if s >= s_max {
                return n_max - target;
            }
            match propagator(s, params, state.cutoff()).and_then(|u| apply(&u, state)) {
                Ok(next) => {
                    let v = next.norm_sq();
                    evals.push((s, v));
                    v - target
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        s_max,
        1e-14,
        WAITING_TIME_RTOL,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in evals.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::NonMonotoneSurvival(format!(
                "norm^2 {:.15e} at tau {} exceeds {:.15e} at tau {}",
                w[1].1, w[1].0, w[0].1, w[0].0
            )));
        }
    }
    root.map(Some).ok_or_else(|| Error::NonMonotoneSurvival("root not bracketed".into()))
}

/// Waiting time until the survival probability `<psi(tau)|psi(tau)>` of the
/// normalized `state` reaches `zeta`, searched on `(0, tau_max]`.
pub fn waiting_time(
    state: &TruncatedState,
    zeta: f64,
    params: &DimensionlessParams,
    tau_max: f64,
) -> Result<Option<f64>> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidParams(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    let n = state.norm_sq();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("waiting time needs a normalized state, norm^2 = {n}")));
    }
    find_crossing(state, zeta, params, tau_max, None)
}

/// Propagators keyed by time on a fixed lattice. Off-lattice requests are
/// computed on demand and not stored.
#[derive(Debug)]
pub struct PropagatorCache {
    params: DimensionlessParams,
    cutoff: usize,
    quantum: f64,
    entries: RwLock<HashMap<u64, Arc<PropagatorMatrix>>>,
}

impl PropagatorCache {
    pub fn new(params: DimensionlessParams, cutoff: usize, quantum: f64) -> Self {
        Self { params, cutoff, quantum, entries: RwLock::new(HashMap::new()) }
    }

    pub fn params(&self) -> &DimensionlessParams {
        &self.params
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn get(&self, tau: f64) -> Result<Arc<PropagatorMatrix>> {
        let steps = tau / self.quantum;
        let k = steps.round();
        if k >= 1.0 && (steps - k).abs() < 1e-9 {
            let key = k as u64;
            if let Some(u) = self.entries.read().expect("propagator cache poisoned").get(&key) {
                return Ok(Arc::clone(u));
            }
            let u = Arc::new(propagator(self.quantum * k, &self.params, self.cutoff)?);
            let mut map = self.entries.write().expect("propagator cache poisoned");
            return Ok(Arc::clone(map.entry(key).or_insert(u)));
        }
        Ok(Arc::new(propagator(tau, &self.params, self.cutoff)?))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("propagator cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
