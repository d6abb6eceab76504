use thiserror::Error;

/// Errors raised by the simulator. Each variant names the subsystem that
/// produced it so the CLI can report a module-identified cause.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fock2d: cutoff {cutoff} too small for coherent amplitude (norm deficit {deficit:.3e})")]
    Truncation { cutoff: usize, deficit: f64 },

    #[error("fock2d: invalid state: {0}")]
    InvalidState(String),

    #[error("params: {0}")]
    InvalidParams(String),

    #[error("su11: disentangling denominator vanishes at tau = {tau}")]
    Singularity { tau: f64 },

    #[error("su11: propagator element out of floating-point range at tau = {tau}")]
    NumericRange { tau: f64 },

    #[error("cutoff mismatch: expected {expected}, got {got}")]
    CutoffMismatch { expected: usize, got: usize },

    #[error("su11: survival function is not monotone ({0})")]
    NonMonotoneSurvival(String),

    #[error("recoil: jump annihilated the state (post-jump norm^2 = {norm_sq:.3e})")]
    DegenerateJump { norm_sq: f64 },

    #[error("caldeira-leggett: coefficients singular at nu = {nu} (multiple of pi)")]
    SingularCoefficients { nu: f64 },

    #[error("engine: {0}")]
    Engine(String),

    #[error("engine: tau = {0} is not on the sampling lattice")]
    OffLattice(f64),

    #[error("engine: every trajectory ended in a degenerate jump")]
    EnsembleFailure,
}

pub type Result<T> = std::result::Result<T, Error>;
