//! Cardinality-constrained portfolio selection.
//!
//! Minimizes a mean-variance or CVaR objective over fully invested long-only
//! portfolios whose assets are split into groups, each with a budget interval
//! and a cap on the number of holdings. The combinatorial set is handled by a
//! quadratic-penalty relaxation `f(w) + (ν/2)‖w - v‖²` with `w` on the simplex
//! and `v` in the sparse group set, solved by proximal alternating linearized
//! minimization (optionally with FISTA momentum) under a continuation on `ν`.
//!
//! Besides the solvers the crate ships an exhaustive-search oracle and the
//! experiment drivers used to validate them.

pub mod data;
pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod linalg;
pub mod objectives;
pub mod oracle;
pub mod projection;
pub mod solver;

pub use error::{Error, Result};
