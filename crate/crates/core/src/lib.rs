//! Dynamical systems method for ill-posed monotone operator equations.
//!
//! The flow `u' = -(F(u) + a(t) u - f_delta)` is integrated until the
//! discrepancy `||F(u) - f_delta||` first reaches `C delta^zeta`. Alongside
//! the solver the crate ships the regularized path `F(V) + a V = f_delta`,
//! schedule certificates and audits that check the classical a priori
//! bounds on computed data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dsm;
pub mod exec;
pub mod operators;
pub mod path;
pub mod quadrature;
pub mod schedule;
pub mod space;
pub mod study;
pub mod verification;

pub use exec::Execution;
pub use space::{HVector, SpaceError, Weights};
