//! Polynomial quasi-Trefftz bases for the two-dimensional first-order
//! Helmholtz system
//!
//! ```text
//! iωρ v = ∇p,    iω/(ρ c²) p = ∇·v
//! ```
//!
//! Four constructions are provided: two explicit recurrences
//! ([`explicit`]) and two SVD-kernel methods ([`algebraic`]). The
//! [`verify`] module reproduces the convergence studies, [`flops`] the
//! operation counts.

pub mod algebraic;
pub mod coeff;
pub mod error;
pub mod explicit;
pub mod flops;
pub mod linalg;
pub mod mesh;
pub mod method;
pub mod poly2d;
pub mod verify;

pub use coeff::{AcousticParams, CoeffProvider, ProblemConfig, Scaling};
pub use error::{Error, Result};
pub use explicit::{ExplicitMethod, InitVector};
pub use flops::{ComplexityReport, FlopLedger};
pub use method::Method;
pub use poly2d::{GradedPoly2, QTFunction, C64};
