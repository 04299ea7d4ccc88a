//! Numerical laboratory for pilot-wave (Bohmian) dynamics.
//!
//! Wave functions live on uniform grids ([`grid`]) and are propagated by
//! [`schrodinger`]. Configurations follow the guidance law ([`guidance`]);
//! ensembles check quantum-equilibrium equivariance ([`equilibrium`]);
//! subsystem wave functions are extracted by [`conditional`]; and the
//! minisuperspace Wheeler–DeWitt model lives in [`minisuperspace`].

pub mod conditional;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod minisuperspace;
pub(crate) mod lines;
pub mod scenarios;
pub mod schrodinger;
pub mod spline;

pub use error::{Error, Result};
pub use grid::{Axis, Boundary, GridSpec, RealField, VectorField, WaveFunction};
