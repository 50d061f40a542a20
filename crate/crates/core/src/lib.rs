//! Radial expanding self-similar profiles of the focusing heat equation
//! `u_t = Δu + |u|^{p-1}u`: profile shooting, the spectrum of the linearized
//! similarity operator, the free similarity semigroup, and time evolution in
//! similarity variables.

pub mod banded;
pub mod dynamics;
pub mod error;
pub mod exponents;
pub mod fd;
pub mod fit;
pub mod grid;
pub mod ode;
pub mod quadrature;
pub mod semigroup;
pub mod spectral;
pub mod profile;
pub mod tridiag;

pub use error::{Error, Result};
pub use exponents::{derived_exponents, ProblemParams, Regime};
pub use grid::RadialGrid;
