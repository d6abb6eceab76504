//! Quantum-trajectory simulation of the centre-of-mass motion of a two-level
//! atom trapped in the dark core of a Gaussian-Laguerre beam.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caldeira_leggett;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fock2d;
pub mod params;
pub mod recoil;
pub mod roots;
pub mod su11;

pub use error::{Error, Result};
