//! Finite-volume random Schrödinger operators `H_ω = -Δ_h + Σ_k ω_k u_k²` on a box:
//! spectra, spectral averaging, the spectral shift function and density-of-states bounds.

// NaN must fail every range check, so negated comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod cube_basis;
pub mod dos;
pub mod error;
pub mod instances;
pub mod operator;
pub mod quadrature;
pub mod report;
pub mod spectral;
pub mod ssf;

pub use error::{Error, Result};
pub use report::VerificationReport;
