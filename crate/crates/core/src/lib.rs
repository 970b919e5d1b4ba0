//! Constrained controllability of finite-dimensional linear systems: exact
//! discrete propagation, dual functionals, unique-continuation and
//! observability checks, and a minimizer for the dual problems.

pub mod error;
pub mod functional;
pub mod linalg;
pub mod models;
pub mod subspace;
pub mod system;
pub mod uc;
pub mod minimizer;
