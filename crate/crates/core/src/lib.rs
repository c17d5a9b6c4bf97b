//! Numerical laboratory for fully nonlinear elliptic equations of the form
//! f(lambda(sqrt(-1) d dbar u + chi)) = psi on discretized complex tori:
//! symmetric operator kernels with exact jets, the tangent-cone-at-infinity
//! machinery for their level sets, spectral Hermitian geometry, a
//! continuity-method solver (including the gradient-dependent form arising
//! from the Gauduchon equation), and a verification harness for the
//! structure conditions and second-order estimate ratios.

pub mod conegeo;
pub mod config;
pub mod error;
pub mod estimates;
pub mod hermgeo;
pub mod linalg;
pub mod solver;
pub mod symfun;

pub use error::{Error, Result};

pub use num_complex;
