//! Numeric substrate shared by every analysis module.

pub mod ext_real;
pub mod linalg;
pub mod localization;
pub mod oracle;

pub use ext_real::ExtReal;
pub use linalg::{Matrix, SymMatrix, Subspace, ThinSvd, Vector, DEFAULT_RANK_TOL};
pub use localization::{localization_nesting_check, AttentiveLocalization};
pub use oracle::{FunctionOracle, PrimalDualPair};

/// Largest ambient dimension accepted by the toolkit.
pub const MAX_DIM: usize = 16;

/// Magnitude beyond which numeric values are treated as infinite.
pub const CAP: f64 = 1e6;
