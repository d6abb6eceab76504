//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the closed-form machinery of the library: the
//! propagator and jump references come from dense matrix exponentials and
//! the ensemble reference integrates the master equation for the density
//! matrix directly.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn annihilation(dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

pub fn creation(dim: usize) -> DMatrix<Complex64> {
    annihilation(dim).adjoint()
}

pub fn position(dim: usize, beta: f64) -> DMatrix<Complex64> {
    (annihilation(dim) + creation(dim)) * c((beta / 2.0).sqrt())
}

pub fn momentum(dim: usize, beta: f64) -> DMatrix<Complex64> {
    (creation(dim) - annihilation(dim)) * (I * (beta / 2.0).sqrt())
}

pub fn top_left(m: &DMatrix<Complex64>, n: usize) -> DMatrix<Complex64> {
    m.view((0, 0), (n, n)).into_owned()
}

/// `exp(-i tau [(1 - delta) a^dag a - (delta/2)(a^dag^2 + a^2)])` on `n`
/// levels, computed on `n + pad` levels and cropped.
pub fn mode_propagator_oracle(tau: f64, delta: Complex64, n: usize, pad: usize) -> DMatrix<Complex64> {
    let dim = n + pad;
    let a = annihilation(dim);
    let ad = creation(dim);
    let h = &ad * &a * (c(1.0) - delta) - (&ad * &ad + &a * &a) * (delta / 2.0);
    top_left(&(h * (-I * tau)).exp(), n)
}

/// `exp(i b X)` on `n` levels via a padded dense exponential.
pub fn displacement_oracle(b: f64, beta: f64, n: usize, pad: usize) -> DMatrix<Complex64> {
    let x = position(n + pad, beta);
    top_left(&(x * (I * b)).exp(), n)
}

/// `X exp(i b X)` on `n` levels as `-i d/db exp(i b X)` by a fourth-order
/// central difference of the dense exponential.
pub fn kick_position_fd_oracle(b: f64, beta: f64, n: usize, pad: usize, h: f64) -> DMatrix<Complex64> {
    let g = |s: f64| displacement_oracle(s, beta, n, pad);
    let d = (g(b - 2.0 * h) - g(b - h) * c(8.0) + g(b + h) * c(8.0) - g(b + 2.0 * h)) / c(12.0 * h);
    d * (-I)
}

/// Kronecker product `a (x) b` with the first factor as the slow index.
pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Emission directions `(eps_x, eps_y)` with weights for the dipole pattern,
/// Gauss-Legendre in `cos(theta)` times the trapezoid rule in `phi`.
pub fn emission_quadrature(n_theta: usize, n_phi: usize) -> Vec<(f64, f64, f64)> {
    let (xs, ws) = gauss_legendre(n_theta);
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (&ct, &w) in xs.iter().zip(&ws) {
        let st = (1.0 - ct * ct).sqrt();
        // polar density of cos(theta) is (3/8)(1 + cos^2)
        let wt = w * 0.375 * (1.0 + ct * ct);
        for k in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
            out.push((st * phi.cos(), st * phi.sin(), wt / n_phi as f64));
        }
    }
    out
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Means and variances of X, Y, Px, Py, L.
#[derive(Debug, Clone, Copy)]
pub struct OracleSample {
    pub tau: f64,
    pub mean: [f64; 5],
    pub var: [f64; 5],
}

/// Dense integrator for the recoil master equation
///
/// ```text
/// d rho/d tau = -i [n_x + n_y, rho] - eta {X^2 + Y^2, rho}
///               + 2 eta Int dOmega Phi(n) C(n) rho C(n)^dag
/// ```
///
/// on `n` levels per mode. The state is held in the product eigenbasis of
/// the truncated position operators, where every `C(n)` is diagonal.
pub struct DensityMatrixOracle {
    n: usize,
    beta: f64,
    xs: Vec<f64>,
    v: DMatrix<f64>,
    h: Vec<Complex64>,
    dissipator: Vec<Complex64>,
    rho: Vec<Complex64>,
    ops: Vec<(DMatrix<Complex64>, DMatrix<Complex64>)>,
}

impl DensityMatrixOracle {
    /// `init_levels` truncates the initial coherent amplitudes, so the start
    /// can match a state prepared on a smaller basis.
    pub fn new(
        beta: f64,
        eta: f64,
        mu: f64,
        n: usize,
        init_levels: usize,
        initial: [f64; 4],
        quad: &[(f64, f64, f64)],
    ) -> Self {
        let x = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt() * (beta / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(x);
        let xs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let v = eig.eigenvectors;

        let diag = DMatrix::from_fn(n, n, |i, j| if i == j { i as f64 } else { 0.0 });
        let hm = v.transpose() * diag * &v;
        let h: Vec<Complex64> = hm.iter().map(|&z| c(z)).collect();

        let mut dissipator = vec![c(0.0); n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let (dx, dy) = (xs[i] - xs[k], xs[j] - xs[l]);
                        let f: Complex64 =
                            quad.iter().map(|&(ex, ey, w)| (I * (mu * (ex * dx + ey * dy))).exp() * w).sum();
                        let cket = Complex64::new(xs[i], xs[j]);
                        let cbra = Complex64::new(xs[k], -xs[l]);
                        let r2 = xs[i] * xs[i] + xs[j] * xs[j] + xs[k] * xs[k] + xs[l] * xs[l];
                        dissipator[idx(n, i, j, k, l)] = cket * cbra * f * (2.0 * eta) - c(eta * r2);
                    }
                }
            }
        }

        // initial coherent product state, normalized on init_levels levels
        let amp = |q: f64, p: f64| {
            let alpha = Complex64::new(q, p) / (2.0 * beta).sqrt();
            let mut out = vec![c((-alpha.norm_sqr() / 2.0).exp())];
            for m in 1..n {
                let prev = out[m - 1];
                out.push(prev * alpha / (m as f64).sqrt());
            }
            for z in out.iter_mut().skip(init_levels) {
                *z = c(0.0);
            }
            out
        };
        let ax = amp(initial[0], initial[2]);
        let ay = amp(initial[1], initial[3]);
        let norm: f64 = ax.iter().map(|z| z.norm_sqr()).sum::<f64>() * ay.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut rho = vec![c(0.0); n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        rho[idx(n, i, j, k, l)] = ax[i] * ay[j] * (ax[k] * ay[l]).conj() / norm;
                    }
                }
            }
        }
        // nalgebra iterates column-major, so this is V^T in row-major order
        let vt: Vec<Complex64> = v.iter().map(|&z| c(z)).collect();
        for axis in 0..4 {
            rho = apply_axis(&rho, &vt, n, axis);
        }

        // observables on two extra levels so squares are exact on n levels
        let m = n + 2;
        let one = DMatrix::<Complex64>::identity(m, m);
        let xo = position(m, beta);
        let po = momentum(m, beta);
        let ax_ = kron(&annihilation(m), &one);
        let ay_ = kron(&one, &annihilation(m));
        let l_op = (&ax_ * ay_.adjoint() - ax_.adjoint() * &ay_) * (I * beta);
        let ops = [kron(&xo, &one), kron(&one, &xo), kron(&po, &one), kron(&one, &po), l_op]
            .into_iter()
            .map(|o| {
                let o2 = &o * &o;
                (crop2(&o, m, n), crop2(&o2, m, n))
            })
            .collect();

        Self { n, beta, xs, v, h, dissipator, rho, ops }
    }

    fn rhs(&self, rho: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![c(0.0); rho.len()];
        for axis in 0..4 {
            let t = apply_axis(rho, &self.h, n, axis);
            let s = if axis < 2 { -I } else { I };
            for (o, v) in out.iter_mut().zip(t) {
                *o += v * s;
            }
        }
        for ((o, r), d) in out.iter_mut().zip(rho).zip(&self.dissipator) {
            *o += r * d;
        }
        out
    }

    fn step(&mut self, dt: f64) {
        let add = |a: &[Complex64], b: &[Complex64], s: f64| -> Vec<Complex64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = self.rhs(&self.rho);
        let k2 = self.rhs(&add(&self.rho, &k1, dt / 2.0));
        let k3 = self.rhs(&add(&self.rho, &k2, dt / 2.0));
        let k4 = self.rhs(&add(&self.rho, &k3, dt));
        for i in 0..self.rho.len() {
            self.rho[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }

    pub fn trace(&self) -> f64 {
        let n = self.n;
        let mut t = 0.0;
        for i in 0..n {
            for j in 0..n {
                t += self.rho[idx(n, i, j, i, j)].re;
            }
        }
        t
    }

    pub fn sample(&self, tau: f64) -> OracleSample {
        let n = self.n;
        let v: Vec<Complex64> = self.v.transpose().iter().map(|&z| c(z)).collect();
        let mut rho = self.rho.clone();
        for axis in 0..4 {
            rho = apply_axis(&rho, &v, n, axis);
        }
        let dim = n * n;
        let rm = DMatrix::from_fn(dim, dim, |r, col| rho[r * dim + col]);
        let mut mean = [0.0; 5];
        let mut var = [0.0; 5];
        for (ch, (o, o2)) in self.ops.iter().enumerate() {
            let m1 = (o * &rm).trace().re;
            let m2 = (o2 * &rm).trace().re;
            mean[ch] = m1;
            var[ch] = m2 - m1 * m1;
        }
        OracleSample { tau, mean, var }
    }

    /// Integrates to each `k * sample_dt` for `k = 0..=steps` with RK4.
    pub fn run(&mut self, sample_dt: f64, steps: usize, dt: f64) -> Vec<OracleSample> {
        let sub = (sample_dt / dt).round() as usize;
        let h = sample_dt / sub as f64;
        let mut out = vec![self.sample(0.0)];
        for k in 1..=steps {
            for _ in 0..sub {
                self.step(h);
            }
            out.push(self.sample(k as f64 * sample_dt));
        }
        out
    }
}

fn idx(n: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * n + j) * n + k) * n + l
}

/// `out[.. a ..] = sum_b m[a, b] rho[.. b ..]` along `axis`; `m` is row-major.
fn apply_axis(rho: &[Complex64], m: &[Complex64], n: usize, axis: usize) -> Vec<Complex64> {
    let stride = n.pow(3 - axis as u32);
    let block = stride * n;
    let mut out = vec![c(0.0); rho.len()];
    for base in (0..rho.len()).step_by(block) {
        for inner in 0..stride {
            for a in 0..n {
                let mut acc = c(0.0);
                for b in 0..n {
                    acc += m[a * n + b] * rho[base + b * stride + inner];
                }
                out[base + a * stride + inner] = acc;
            }
        }
    }
    out
}

/// Restricts a two-mode operator on `m` levels per mode to `n` levels.
fn crop2(o: &DMatrix<Complex64>, m: usize, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n * n, n * n, |r, col| {
        let (i, j) = (r / n, r % n);
        let (k, l) = (col / n, col % n);
        o[(i * m + j, k * m + l)]
    })
}
