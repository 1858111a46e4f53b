//! Numerical core for studying uniqueness of the degenerate Cauchy problem
//!
//! ```text
//! u_t + ½ σ²(x) u_xx = 0   on (0,∞) × [0,T),   u(0,t) = g(0),   u(x,T) = g(x)
//! ```
//!
//! and the driftless diffusion `dX = σ(X) dW` absorbed at zero. The crate
//! decides whether `X` is a true martingale from the integral test
//! `∫₁^∞ x/σ²(x) dx = ∞`, simulates `X` (Euler with absorption, plus an exact
//! inverse-Bessel sampler for `σ(x) = α x²`), and solves the PDE with a
//! θ-scheme under several far-field boundary conditions so the non-unique
//! solution family `u + λ u*` becomes visible.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel path
//! execution and the command-line front end live in the `cauchy-lab` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod condition;
pub mod error;
pub mod expr;
pub mod math;
pub mod model;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod tridiag;

pub use error::{Error, Result};
