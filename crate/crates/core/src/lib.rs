//! Spectral-Galerkin simulation and verification of the 2D Navier-Stokes
//! equation with linear multiplicative Stratonovich noise
//!
//! ```text
//! du = [-Au - B(u)] dt + σ u ∘ dW,   u(0) = Y,
//! ```
//!
//! through the pathwise substitution `u = v Q`, `Q = exp(σW)`, which turns it
//! into the random PDE `dv/dt = -Av - Q B(v)`.

pub mod anticipating;
pub mod basis;
pub mod direct;
pub mod error;
pub mod galerkin;
pub mod harness;
pub mod tangent;
pub mod wiener;

pub use error::{Error, Result};
