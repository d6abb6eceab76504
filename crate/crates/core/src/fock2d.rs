//! Two-mode truncated Fock space.
//!
//! A state is stored as the coefficient matrix `A[(n_x, n_y)]` over the
//! product basis `|n_x, n_y>` with `0 <= n_x, n_y < N`. Per mode the
//! rescaled quadratures are
//!
//! ```text
//! X = sqrt(beta/2) (a + a^dag),   P = i sqrt(beta/2) (a^dag - a),   [X, P] = i beta
//! ```
//!
//! Rows index the x-mode, columns the y-mode. Operators on the x-mode act
//! from the left (`O A`), operators on the y-mode from the right (`A O^T`).
//!
//! Expectation values are evaluated exactly for the stored vector: the state
//! is embedded in an `(N+1)`-level space before any raising operator is
//! applied, so `<X^2> = |X psi|^2` carries no truncation error of its own.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, Zip};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::DimensionlessParams;

/// Largest accepted norm deficit of a freshly prepared coherent state.
pub const COHERENT_DEFICIT_TOL: f64 = 1e-4;

/// Norm below which a state is treated as annihilated.
pub const MIN_NORM_SQ: f64 = 1e-300;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedState {
    coeffs: Array2<Complex64>,
    beta: f64,
}

impl TruncatedState {
    /// Wraps a coefficient matrix. The matrix must be square, at least 2x2,
    /// finite and not identically zero.
    pub fn new(coeffs: Array2<Complex64>, beta: f64) -> Result<Self> {
        let (r, c) = coeffs.dim();
        if r != c || r < 2 {
            return Err(Error::InvalidState(format!("coefficient matrix must be square with N >= 2, got {r}x{c}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidState(format!("beta must be positive, got {beta}")));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite coefficient".into()));
        }
        Ok(Self { coeffs, beta })
    }

    pub(crate) fn from_parts(coeffs: Array2<Complex64>, beta: f64) -> Self {
        debug_assert_eq!(coeffs.nrows(), coeffs.ncols());
        Self { coeffs, beta }
    }

    pub fn vacuum(cutoff: usize, beta: f64) -> Result<Self> {
        Self::number_state(0, 0, cutoff, beta)
    }

    pub fn number_state(nx: usize, ny: usize, cutoff: usize, beta: f64) -> Result<Self> {
        if nx >= cutoff || ny >= cutoff {
            return Err(Error::InvalidState(format!("|{nx},{ny}> outside cutoff {cutoff}")));
        }
        let mut coeffs = Array2::zeros((cutoff, cutoff));
        coeffs[[nx, ny]] = Complex64::new(1.0, 0.0);
        Self::new(coeffs, beta)
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn coeffs(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Array2<Complex64> {
        self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq();
        if !(n > MIN_NORM_SQ) || !n.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize state with norm^2 = {n:e}")));
        }
        let scale = 1.0 / n.sqrt();
        self.coeffs.mapv_inplace(|z| z * scale);
        Ok(())
    }

    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.normalize()?;
        Ok(out)
    }

    /// Probability (of the normalized state) in the `shells` highest levels
    /// of either mode.
    pub fn top_shell_probability(&self, shells: usize) -> f64 {
        let n = self.cutoff();
        let lo = n.saturating_sub(shells);
        let total = self.norm_sq();
        if total <= 0.0 {
            return 0.0;
        }
        let mut top = 0.0;
        for ((i, j), z) in self.coeffs.indexed_iter() {
            if i >= lo || j >= lo {
                top += z.norm_sqr();
            }
        }
        top / total
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &TruncatedState) -> Result<Complex64> {
        if self.cutoff() != other.cutoff() {
            return Err(Error::CutoffMismatch { expected: self.cutoff(), got: other.cutoff() });
        }
        Ok(inner(&self.coeffs, &other.coeffs))
    }
}

/// Product coherent state with mean position `(x0, y0)` and mean momentum
/// `(px0, py0)`. The coefficients are the truncated coherent amplitudes
/// (not renormalized); the call fails if the truncation loses more than
/// [`COHERENT_DEFICIT_TOL`] of the norm.
pub fn make_coherent(
    x0: f64,
    y0: f64,
    px0: f64,
    py0: f64,
    params: &DimensionlessParams,
    cutoff: usize,
) -> Result<TruncatedState> {
    if cutoff < 2 {
        return Err(Error::InvalidState(format!("cutoff must be at least 2, got {cutoff}")));
    }
    let beta = params.beta();
    let scale = 1.0 / (2.0 * beta).sqrt();
    let alpha_x = Complex64::new(x0, px0) * scale;
    let alpha_y = Complex64::new(y0, py0) * scale;
    for alpha in [alpha_x, alpha_y] {
        if alpha.norm_sqr() > cutoff as f64 / 4.0 {
            log::warn!("coherent amplitude |alpha|^2 = {:.3} is large for cutoff {cutoff}", alpha.norm_sqr());
        }
    }
    let cx = coherent_amplitudes(alpha_x, cutoff);
    let cy = coherent_amplitudes(alpha_y, cutoff);
    let norm_sq = cx.iter().map(|z| z.norm_sqr()).sum::<f64>() * cy.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let deficit = 1.0 - norm_sq;
    if deficit > COHERENT_DEFICIT_TOL {
        return Err(Error::Truncation { cutoff, deficit });
    }
    let coeffs = Array2::from_shape_fn((cutoff, cutoff), |(i, j)| cx[i] * cy[j]);
    TruncatedState::new(coeffs, beta)
}

/// `e^{-|alpha|^2/2} alpha^n / sqrt(n!)` for `n < cutoff`.
pub fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Array1<Complex64> {
    let mut out = Array1::zeros(cutoff);
    out[0] = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 1..cutoff {
        out[n] = out[n - 1] * alpha / (n as f64).sqrt();
    }
    out
}

/// Indices of the five tracked observables within [`Moments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    X = 0,
    Y = 1,
    Px = 2,
    Py = 3,
    L = 4,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::X, Channel::Y, Channel::Px, Channel::Py, Channel::L];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Px => "px",
            Channel::Py => "py",
            Channel::L => "L",
        }
    }
}

/// First and second moments of X, Y, P_x, P_y and L on a normalized state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: [f64; 5],
    pub second: [f64; 5],
}

impl Moments {
    pub fn variance(&self, c: Channel) -> f64 {
        let i = c as usize;
        self.second[i] - self.mean[i] * self.mean[i]
    }
}

/// Means and variances of the tracked observables at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ObservableRecord {
    pub tau: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_px: f64,
    pub mean_py: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub var_px: f64,
    pub var_py: f64,
    pub mean_l: f64,
    pub mean_l2: f64,
    pub var_l: f64,
    pub jump_count: u64,
}

impl ObservableRecord {
    pub fn from_moments(tau: f64, m: &Moments, jump_count: u64) -> Self {
        Self {
            tau,
            mean_x: m.mean[0],
            mean_y: m.mean[1],
            mean_px: m.mean[2],
            mean_py: m.mean[3],
            var_x: m.variance(Channel::X),
            var_y: m.variance(Channel::Y),
            var_px: m.variance(Channel::Px),
            var_py: m.variance(Channel::Py),
            mean_l: m.mean[4],
            mean_l2: m.second[4],
            var_l: m.variance(Channel::L),
            jump_count,
        }
    }

    pub fn mean(&self, c: Channel) -> f64 {
        match c {
            Channel::X => self.mean_x,
            Channel::Y => self.mean_y,
            Channel::Px => self.mean_px,
            Channel::Py => self.mean_py,
            Channel::L => self.mean_l,
        }
    }

    pub fn var(&self, c: Channel) -> f64 {
        match c {
            Channel::X => self.var_x,
            Channel::Y => self.var_y,
            Channel::Px => self.var_px,
            Channel::Py => self.var_py,
            Channel::L => self.var_l,
        }
    }
}

/// Observables of the normalized state, with `tau = 0` and no jumps.
pub fn expectations(state: &TruncatedState) -> Result<ObservableRecord> {
    Ok(ObservableRecord::from_moments(0.0, &moments(state)?, 0))
}

/// Moments of the five observables on a normalized copy of `state`.
pub fn moments(state: &TruncatedState) -> Result<Moments> {
    let norm_sq = state.norm_sq();
    if !(norm_sq > MIN_NORM_SQ) || !norm_sq.is_finite() {
        return Err(Error::InvalidState(format!("zero-norm state (norm^2 = {norm_sq:e})")));
    }
    let n = state.cutoff();
    let mut psi = Array2::zeros((n + 1, n + 1));
    psi.slice_mut(s![..n, ..n]).assign(&state.coeffs);
    let inv = 1.0 / norm_sq;
    let half_beta = (state.beta / 2.0).sqrt();

    let ax = lower_rows(&psi);
    let adx = raise_rows(&psi);
    let ay = lower_cols(&psi);
    let ady = raise_cols(&psi);

    let x_psi = (&ax + &adx) * half_beta;
    let y_psi = (&ay + &ady) * half_beta;
    let px_psi = (&adx - &ax) * (I * half_beta);
    let py_psi = (&ady - &ay) * (I * half_beta);
    // L = X P_y - P_x Y = i beta (a_x a_y^dag - a_x^dag a_y)
    let l_psi = (&raise_cols(&ax) - &lower_cols(&adx)) * (I * state.beta);

    let mut out = Moments::default();
    for (i, v) in [x_psi, y_psi, px_psi, py_psi, l_psi].iter().enumerate() {
        out.mean[i] = inner(&psi, v).re * inv;
        out.second[i] = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * inv;
    }
    Ok(out)
}

/// Imaginary part of `<L>` relative to `sqrt(<L^2>)`; zero up to round-off
/// for any state since `L` is Hermitian.
pub fn angular_momentum_imag_residual(state: &TruncatedState) -> f64 {
    let n = state.cutoff();
    let mut psi = Array2::zeros((n + 1, n + 1));
    psi.slice_mut(s![..n, ..n]).assign(&state.coeffs);
    let l_psi = (&raise_cols(&lower_rows(&psi)) - &lower_cols(&raise_rows(&psi))) * (I * state.beta);
    let l = inner(&psi, &l_psi);
    let scale = l_psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * state.norm_sq().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        l.im.abs() / scale
    }
}

/// Rectangular grid of sample points in the X-Y plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl SampleGrid {
    /// `points x points` grid spanning `[-half_width, half_width]` in both
    /// directions around `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, half_width: f64, points: usize) -> Self {
        let lin = |c: f64| -> Vec<f64> {
            if points == 1 {
                return vec![c];
            }
            (0..points).map(|k| c - half_width + 2.0 * half_width * k as f64 / (points - 1) as f64).collect()
        };
        Self { xs: lin(cx), ys: lin(cy) }
    }

    pub fn dx(&self) -> f64 {
        spacing(&self.xs)
    }

    pub fn dy(&self) -> f64 {
        spacing(&self.ys)
    }
}

fn spacing(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    }
}

/// Oscillator eigenfunctions `psi_n(q)` for `n < cutoff` at each point, in
/// the rescaled units (`hbar -> beta`, unit frequency and mass).
pub fn oscillator_table(points: &[f64], cutoff: usize, beta: f64) -> Array2<f64> {
    let mut table = Array2::zeros((points.len(), cutoff));
    let norm0 = (PI * beta).powf(-0.25);
    for (k, &q) in points.iter().enumerate() {
        let u = q / beta.sqrt();
        let mut prev = 0.0;
        let mut cur = norm0 * (-u * u / 2.0).exp();
        table[[k, 0]] = cur;
        for n in 1..cutoff {
            let next = (2.0 / n as f64).sqrt() * u * cur - ((n - 1) as f64 / n as f64).sqrt() * prev;
            prev = cur;
            cur = next;
            table[[k, n]] = cur;
        }
    }
    table
}

/// `|<x, y|psi>|^2` of the normalized state on the grid; rows follow
/// `grid.xs`, columns `grid.ys`.
pub fn position_density(state: &TruncatedState, grid: &SampleGrid) -> Result<Array2<f64>> {
    if grid.xs.iter().chain(grid.ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("non-finite grid point".into()));
    }
    let psi = state.normalized()?;
    let n = psi.cutoff();
    let tx = oscillator_table(&grid.xs, n, psi.beta).mapv(|v| Complex64::new(v, 0.0));
    let ty = oscillator_table(&grid.ys, n, psi.beta).mapv(|v| Complex64::new(v, 0.0));
    let amp = tx.dot(&psi.coeffs).dot(&ty.t());
    Ok(amp.mapv(|z| z.norm_sqr()))
}

/// Dense single-mode operators on `cutoff` levels.
pub mod operators {
    use super::*;

    pub fn annihilation(cutoff: usize) -> Array2<Complex64> {
        let mut a = Array2::zeros((cutoff, cutoff));
        for n in 1..cutoff {
            a[[n - 1, n]] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    pub fn creation(cutoff: usize) -> Array2<Complex64> {
        annihilation(cutoff).t().to_owned()
    }

    pub fn position(cutoff: usize, beta: f64) -> Array2<Complex64> {
        (annihilation(cutoff) + creation(cutoff)) * (beta / 2.0).sqrt()
    }

    pub fn momentum(cutoff: usize, beta: f64) -> Array2<Complex64> {
        (creation(cutoff) - annihilation(cutoff)) * (I * (beta / 2.0).sqrt())
    }
}

pub(crate) fn inner(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    let mut acc = C0;
    Zip::from(a).and(b).for_each(|x, y| acc += x.conj() * y);
    acc
}

fn lower_rows(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let mut out = Array2::zeros(a.raw_dim());
    for i in 0..n - 1 {
        let f = ((i + 1) as f64).sqrt();
        out.row_mut(i).zip_mut_with(&a.row(i + 1), |o, v| *o = v * f);
    }
    out
}

fn raise_rows(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let mut out = Array2::zeros(a.raw_dim());
    for i in 0..n - 1 {
        let f = ((i + 1) as f64).sqrt();
        out.row_mut(i + 1).zip_mut_with(&a.row(i), |o, v| *o = v * f);
    }
    out
}

fn lower_cols(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.ncols();
    let mut out = Array2::zeros(a.raw_dim());
    for j in 0..n - 1 {
        let f = ((j + 1) as f64).sqrt();
        out.column_mut(j).zip_mut_with(&a.column(j + 1), |o, v| *o = v * f);
    }
    out
}

fn raise_cols(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.ncols();
    let mut out = Array2::zeros(a.raw_dim());
    for j in 0..n - 1 {
        let f = ((j + 1) as f64).sqrt();
        out.column_mut(j + 1).zip_mut_with(&a.column(j), |o, v| *o = v * f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(beta: f64) -> DimensionlessParams {
        DimensionlessParams::direct(beta, 0.0, 0.0).unwrap()
    }

    #[test]
    fn vacuum_coherent_is_vacuum() {
        let s = make_coherent(0.0, 0.0, 0.0, 0.0, &params(0.25), 8).unwrap();
        assert_eq!(s.coeffs()[[0, 0]], Complex64::new(1.0, 0.0));
        assert_eq!(s.norm_sq(), 1.0);
    }

    #[test]
    fn offset_coherent_moments() {
        let s = make_coherent(1.0, 0.0, 0.0, 1.0, &params(0.25), 24).unwrap();
        let r = expectations(&s).unwrap();
        assert_relative_eq!(r.mean_x, 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.mean_py, 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.var_x.sqrt(), 0.353_553_390_593_273_8, epsilon = 1e-9);
        assert_relative_eq!(r.mean_l, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn offset_coherent_poisson_marginal() {
        let s = make_coherent(1.0, 0.0, 0.0, 1.0, &params(0.25), 24).unwrap();
        let mut fact = 1.0;
        for n in 0..12 {
            if n > 0 {
                fact *= n as f64;
            }
            let marginal: f64 = s.coeffs().row(n).iter().map(|z| z.norm_sqr()).sum();
            let poisson = (-2.0f64).exp() * 2.0f64.powi(n as i32) / fact;
            assert_relative_eq!(marginal, poisson, epsilon = 1e-12);
        }
    }

    #[test]
    fn coherent_truncation_error() {
        match make_coherent(4.0, 0.0, 0.0, 0.0, &params(0.25), 8) {
            Err(Error::Truncation { cutoff: 8, deficit }) => assert!(deficit > COHERENT_DEFICIT_TOL),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn vacuum_expectations() {
        let r = expectations(&TruncatedState::vacuum(8, 0.25).unwrap()).unwrap();
        for c in Channel::ALL {
            assert_eq!(r.mean(c), 0.0);
        }
        assert_relative_eq!(r.var_x, 0.125, epsilon = 1e-15);
        assert_relative_eq!(r.var_y, 0.125, epsilon = 1e-15);
        assert_eq!(r.mean_l, 0.0);
    }

    #[test]
    fn number_state_expectations() {
        let beta = 0.25;
        let r = expectations(&TruncatedState::number_state(1, 0, 8, beta).unwrap()).unwrap();
        assert_eq!(r.mean_x, 0.0);
        assert_relative_eq!(r.var_x, 1.5 * beta, epsilon = 1e-15);
        assert_eq!(r.mean_l, 0.0);
    }

    #[test]
    fn zero_state_is_invalid() {
        let s = TruncatedState::new(Array2::zeros((4, 4)), 0.25).unwrap();
        assert!(matches!(expectations(&s), Err(Error::InvalidState(_))));
    }

    #[test]
    fn ladder_algebra_on_number_states() {
        let a = operators::annihilation(10);
        let ad = operators::creation(10);
        let ada = a.dot(&ad);
        for n in 0..9 {
            assert_relative_eq!(ada[[n, n]].re, (n + 1) as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn canonical_commutator_below_top_level() {
        let beta = 0.25;
        let n = 12;
        let x = operators::position(n, beta);
        let p = operators::momentum(n, beta);
        let comm = x.dot(&p) - p.dot(&x);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let expect = if i == j { Complex64::new(0.0, beta) } else { C0 };
                assert!((comm[[i, j]] - expect).norm() < 1e-14);
            }
        }
    }

    /// Brute-force `L = X P_y - P_x Y` from Kronecker products of dense
    /// single-mode matrices on an enlarged basis.
    fn dense_l_expectation(state: &TruncatedState) -> (f64, f64) {
        let n = state.cutoff();
        let big = n + 2;
        let beta = state.beta();
        let x = operators::position(big, beta);
        let p = operators::momentum(big, beta);
        let id = Array2::<Complex64>::eye(big);
        let kron = |a: &Array2<Complex64>, b: &Array2<Complex64>| {
            Array2::from_shape_fn((big * big, big * big), |(r, c)| a[[r / big, c / big]] * b[[r % big, c % big]])
        };
        let l = kron(&x, &id).dot(&kron(&id, &p)) - kron(&p, &id).dot(&kron(&id, &x));
        let mut v = Array1::<Complex64>::zeros(big * big);
        for ((i, j), z) in state.coeffs().indexed_iter() {
            v[i * big + j] = *z;
        }
        let lv = l.dot(&v);
        let norm = state.norm_sq();
        let mean = v.iter().zip(lv.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>().re / norm;
        let l2v = l.dot(&lv);
        let second = v.iter().zip(l2v.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>().re / norm;
        (mean, second)
    }

    #[test]
    fn ladder_form_of_l_matches_position_definition() {
        let s = make_coherent(0.7, -0.3, 0.2, 0.5, &params(0.25), 10).unwrap();
        let (mean, second) = dense_l_expectation(&s);
        let m = moments(&s).unwrap();
        assert_relative_eq!(m.mean[4], mean, epsilon = 1e-12);
        assert_relative_eq!(m.second[4], second, epsilon = 1e-12);
    }

    #[test]
    fn density_of_vacuum_is_gaussian() {
        let beta = 0.25;
        let grid = SampleGrid::square(0.0, 0.0, 2.5, 81);
        let d = position_density(&TruncatedState::vacuum(6, beta).unwrap(), &grid).unwrap();
        for (i, &x) in grid.xs.iter().enumerate() {
            for (j, &y) in grid.ys.iter().enumerate() {
                let g = (-(x * x + y * y) / beta).exp() / (PI * beta);
                assert_relative_eq!(d[[i, j]], g, epsilon = 1e-12);
            }
        }
        let total = d.sum() * grid.dx() * grid.dy();
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn density_of_displaced_state() {
        let beta = 0.25;
        let s = make_coherent(1.0, 0.0, 0.0, 1.0, &params(beta), 24).unwrap();
        let grid = SampleGrid::square(1.0, 0.0, 1.5, 31);
        let d = position_density(&s, &grid).unwrap();
        for (i, &x) in grid.xs.iter().enumerate() {
            for (j, &y) in grid.ys.iter().enumerate() {
                let g = (-((x - 1.0).powi(2) + y * y) / beta).exp() / (PI * beta);
                assert!((d[[i, j]] - g).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn density_node_line_for_y_excitation() {
        let s = TruncatedState::number_state(0, 1, 6, 0.25).unwrap();
        let grid = SampleGrid { xs: vec![-0.5, 0.0, 0.5], ys: vec![-0.3, 0.0, 0.3] };
        let d = position_density(&s, &grid).unwrap();
        for i in 0..3 {
            assert!(d[[i, 1]] < 1e-30);
            assert!(d[[i, 0]] > 0.0 && d[[i, 2]] > 0.0);
            assert_relative_eq!(d[[i, 0]], d[[i, 2]], epsilon = 1e-14);
        }
    }

    fn arb_state(n: usize) -> impl Strategy<Value = TruncatedState> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_filter_map("nonzero", move |v| {
            let coeffs = Array2::from_shape_fn((n, n), |(i, j)| {
                let (re, im) = v[i * n + j];
                Complex64::new(re, im)
            });
            let s = TruncatedState::new(coeffs, 0.25).ok()?;
            (s.norm_sq() > 1e-6).then_some(s)
        })
    }

    proptest! {
        #[test]
        fn variances_nonnegative_and_l_hermitian(s in arb_state(6)) {
            let m = moments(&s).unwrap();
            for c in Channel::ALL {
                prop_assert!(m.variance(c) >= -1e-12);
            }
            prop_assert!(angular_momentum_imag_residual(&s) < 1e-10);
        }

        #[test]
        fn coherent_minimum_uncertainty(x in -1.5f64..1.5, p in -1.5f64..1.5, y in -1.5f64..1.5, q in -1.5f64..1.5) {
            let beta = 0.25;
            let s = make_coherent(x, y, p, q, &params(beta), 40).unwrap();
            let r = expectations(&s).unwrap();
            prop_assert!((r.var_x.sqrt() * r.var_px.sqrt() - beta / 2.0).abs() < 1e-6);
            prop_assert!((r.var_y.sqrt() * r.var_py.sqrt() - beta / 2.0).abs() < 1e-6);
            prop_assert!((s.norm_sq() - 1.0).abs() < 1e-6);
        }
    }
}
