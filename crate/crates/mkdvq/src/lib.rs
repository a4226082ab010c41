//! Numerics for the modified KdV equation on the quarter plane.
//!
//! The crate computes spectral functions from initial and boundary values,
//! solves the matrix Riemann–Hilbert problems that encode the solution, and
//! evaluates the long-time asymptotic formulas in the similarity and
//! self-similar (Painlevé II) sectors.
//!
//! Everything is double precision. Complex scalars are [`C64`].

pub mod asymptotics;
pub mod cli;
pub mod fd;
pub mod linalg;
pub mod mkdv_sim;
pub mod ode;
pub mod painleve;
pub mod quad;
pub mod rh_core;
pub mod special;
pub mod spectral;

pub use num_complex::Complex64 as C64;

pub use linalg::M2;

/// Imaginary unit.
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Shorthand for a complex number.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `exp(i theta)`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}
