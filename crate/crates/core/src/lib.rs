//! Mean stability analysis for discrete-time stochastic switched linear
//! systems.
//!
//! The p-th mean of `x(k+1) = A_k x(k)` decays exponentially exactly when the
//! p-radius `ρ(E[A^{⊗p}])^{1/p}` is below one (for even `p`, or when every
//! matrix in the support keeps the positive orthant invariant). This crate
//! evaluates that quantity through Kronecker lifting, builds Lyapunov
//! certificates, brackets the joint spectral radius of finite supports, and
//! handles Markov jump systems through the `T_p` operator.

pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod mcsim;
pub mod models;
pub mod radius;

pub mod cli;

pub use error::{Error, Result};
pub use linalg::Matrix;
