//! Second-order variational analysis at desk scale.
//!
//! Moreau envelopes and proximal mappings, second-order subderivatives,
//! generalized quadratic forms, generalized twice differentiability and
//! quadratic bundles of extended-real-valued functions on `R^n`, `n <= 16`.

pub mod base;
pub mod bundle;
pub mod corpus;
pub mod error;
pub mod gtd;
pub mod moreau;
pub mod quadform;
pub mod subderiv;

pub use base::{ExtReal, FunctionOracle, PrimalDualPair, SymMatrix, Subspace, ThinSvd, Vector, Matrix};
pub use error::{Error, Result};
