//! Physical to dimensionless parameter conversion.
//!
//! The simulator works in rescaled units where positions and momenta are
//! measured in `alpha_x` and `alpha_p`, time in `1/omega_s`, and `beta` plays
//! the role of Planck's constant (`[X, P] = i beta`). The dimensionless triple
//! `(beta, eta, mu)` fully determines the dynamics; the physical block is only
//! a way to arrive at it, and its output is accompanied by diagnostics.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Relative mismatch above which a derived quantity is reported as
/// inconsistent with a user-supplied dimensionless value.
pub const MISMATCH_THRESHOLD: f64 = 0.05;

/// The complete dimensionless control set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDimensionless", into = "RawDimensionless")]
pub struct DimensionlessParams {
    beta: f64,
    eta: f64,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDimensionless {
    beta: f64,
    eta: f64,
    mu: f64,
}

impl TryFrom<RawDimensionless> for DimensionlessParams {
    type Error = Error;
    fn try_from(raw: RawDimensionless) -> Result<Self> {
        DimensionlessParams::direct(raw.beta, raw.eta, raw.mu)
    }
}

impl From<DimensionlessParams> for RawDimensionless {
    fn from(p: DimensionlessParams) -> Self {
        RawDimensionless { beta: p.beta, eta: p.eta, mu: p.mu }
    }
}

impl DimensionlessParams {
    /// Validates and wraps a dimensionless parameter set.
    pub fn direct(beta: f64, eta: f64, mu: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParams(format!("eta must be non-negative, got {eta}")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidParams(format!("mu must be non-negative, got {mu}")));
        }
        Ok(Self { beta, eta, mu })
    }

    /// The set used for both published simulations: beta = 0.25,
    /// eta = 0.0125, mu = 2.310.
    pub fn reference() -> Self {
        Self { beta: 0.25, eta: 0.0125, mu: 2.310 }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `delta = i beta eta`, the coefficient of the anti-Hermitian part of the
    /// no-jump Hamiltonian.
    pub fn delta(&self) -> Complex64 {
        Complex64::new(0.0, self.beta * self.eta)
    }

    /// Momentum kick magnitude `mu beta` imparted by one recoil along the
    /// emission direction.
    pub fn kick(&self) -> f64 {
        self.mu * self.beta
    }
}

/// Atom and beam parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Atomic mass in kg.
    pub mass: f64,
    /// Beam wavelength in m.
    pub wavelength: f64,
    /// Natural linewidth in rad/s.
    pub linewidth: f64,
    /// Detuning in rad/s.
    pub detuning: f64,
    /// Peak Rabi frequency scale in rad/s.
    pub rabi: f64,
    /// Beam waist in m.
    pub waist: f64,
    /// Chosen rescaled Planck constant.
    pub beta: f64,
}

impl PhysicalParams {
    /// The atom/beam block quoted for the published runs.
    pub fn reference_cs() -> Self {
        let linewidth = 2.0 * PI * 5.3e6;
        Self {
            mass: 0.665e-25,
            wavelength: 657e-9,
            linewidth,
            detuning: 3.0 * linewidth,
            rabi: 2.0 * PI * 5.0e6,
            waist: 2.0e-5,
            beta: 0.25,
        }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// `|nu|^2 = 1 + Gamma^2 / (2 Delta^2)`.
    pub fn nu_sq(&self) -> f64 {
        1.0 + self.linewidth.powi(2) / (2.0 * self.detuning.powi(2))
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("wavelength", self.wavelength),
            ("linewidth", self.linewidth),
            ("detuning", self.detuning),
            ("rabi", self.rabi),
            ("waist", self.waist),
            ("beta", self.beta),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Scales derived from a [`PhysicalParams`] block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales {
    /// Harmonic orbital frequency near the beam axis, rad/s.
    pub omega_s: f64,
    /// Position unit, m.
    pub alpha_x: f64,
    /// Momentum unit, kg m/s.
    pub alpha_p: f64,
    pub eta: f64,
    pub mu: f64,
    /// Recoil momentum in rescaled units.
    pub recoil_dp: f64,
    /// Conjugate minimum-uncertainty position width.
    pub recoil_dx: f64,
    /// Recoil energy over the 2D ground-state energy `hbar omega_s`.
    pub recoil_to_ground: f64,
}

impl DerivedScales {
    pub fn orbital_hz(&self) -> f64 {
        self.omega_s / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// The large-detuning regime assumption is violated.
    Regime(String),
    /// A derived dimensionless quantity disagrees with the supplied one.
    Mismatch { quantity: &'static str, derived: f64, supplied: f64 },
}

impl Diagnostic {
    pub fn is_mismatch(&self) -> bool {
        matches!(self, Diagnostic::Mismatch { .. })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Regime(msg) => write!(f, "warning: {msg}"),
            Diagnostic::Mismatch { quantity, derived, supplied } => write!(
                f,
                "inconsistency: {quantity} derived from the physical block is {derived:.6}, \
                 supplied dimensionless value is {supplied:.6} (ratio {:.3})",
                derived / supplied
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivationReport {
    pub physical: PhysicalParams,
    pub scales: DerivedScales,
    pub diagnostics: Vec<Diagnostic>,
}

impl DerivationReport {
    /// The dimensionless set implied by the physical block alone.
    pub fn dimensionless(&self) -> Result<DimensionlessParams> {
        DimensionlessParams::direct(self.physical.beta, self.scales.eta, self.scales.mu)
    }
}

impl fmt::Display for DerivationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scales;
        writeln!(f, "omega_s        = {:.6e} rad/s", s.omega_s)?;
        writeln!(f, "omega_s / 2pi  = {:.3} Hz", s.orbital_hz())?;
        writeln!(f, "alpha_x        = {:.6e} m", s.alpha_x)?;
        writeln!(f, "alpha_p        = {:.6e} kg m/s", s.alpha_p)?;
        writeln!(f, "eta            = {:.6}", s.eta)?;
        writeln!(f, "mu             = {:.6}", s.mu)?;
        writeln!(f, "recoil dP      = {:.6}", s.recoil_dp)?;
        writeln!(f, "recoil dX      = {:.6}", s.recoil_dx)?;
        writeln!(f, "E_rec / E_gnd  = {:.6}", s.recoil_to_ground)?;
        for d in &self.diagnostics {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Evaluates the rescaling formulas for a physical block.
///
/// `supplied` is an optional dimensionless set that will actually drive the
/// simulation; every derived quantity that disagrees with it by more than
/// [`MISMATCH_THRESHOLD`] is reported.
pub fn derive(physical: &PhysicalParams, supplied: Option<&DimensionlessParams>) -> Result<DerivationReport> {
    physical.validate()?;
    let p = physical;
    let k = p.wavenumber();
    let omega_s = (2.0 * HBAR * p.rabi.powi(2) / (p.mass * p.detuning * p.nu_sq() * p.waist.powi(2))).sqrt();
    let alpha_x = (HBAR / (p.beta * p.mass * omega_s)).sqrt();
    let alpha_p = (HBAR * p.mass * omega_s / p.beta).sqrt();
    let eta = p.linewidth / (4.0 * p.detuning * p.beta);
    let mu = k * alpha_x;
    let recoil_dp = p.beta.sqrt() * (HBAR * k * k / (p.mass * omega_s)).sqrt();
    let recoil_dx = p.beta / (2.0 * recoil_dp);
    let recoil_to_ground = HBAR * k * k / (2.0 * p.mass * omega_s);
    let scales = DerivedScales { omega_s, alpha_x, alpha_p, eta, mu, recoil_dp, recoil_dx, recoil_to_ground };

    let mut diagnostics = Vec::new();
    if p.detuning < p.linewidth {
        diagnostics.push(Diagnostic::Regime(format!(
            "detuning {:.3e} below linewidth {:.3e}; far-detuned elimination is questionable",
            p.detuning, p.linewidth
        )));
    }
    if p.detuning < p.rabi {
        diagnostics.push(Diagnostic::Regime(format!(
            "detuning {:.3e} below Rabi frequency {:.3e}; far-detuned elimination is questionable",
            p.detuning, p.rabi
        )));
    }
    if let Some(s) = supplied {
        if (s.beta() - p.beta).abs() > 1e-12 * p.beta {
            diagnostics.push(Diagnostic::Mismatch { quantity: "beta", derived: p.beta, supplied: s.beta() });
        }
        for (quantity, derived, given) in [("eta", eta, s.eta()), ("mu", mu, s.mu())] {
            if given > 0.0 && ((derived - given) / given).abs() > MISMATCH_THRESHOLD {
                diagnostics.push(Diagnostic::Mismatch { quantity, derived, supplied: given });
            }
        }
        let supplied_dp = s.kick();
        if ((recoil_dp - supplied_dp) / supplied_dp).abs() > MISMATCH_THRESHOLD {
            diagnostics.push(Diagnostic::Mismatch {
                quantity: "mu*beta (recoil dP)",
                derived: recoil_dp,
                supplied: supplied_dp,
            });
        }
    }
    Ok(DerivationReport { physical: *physical, scales, diagnostics })
}
