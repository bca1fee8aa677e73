//! Pseudo-spectral laboratory for rotating compressible Euler flows in the
//! joint low Mach / fast rotation regime.
//!
//! The crate provides spectral fields on periodic boxes, Littlewood–Paley
//! norms, the exact linear wave propagators of the 2D and 3D rotating
//! systems, integrating-factor solvers for the 2D intermediate system, the
//! quasi-geostrophic limit and the forced 3D perturbation, dispersion probes,
//! and the experiment drivers that measure convergence rates in `δ`.

pub mod data;
pub mod dyadic;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod field;
pub mod grid;
pub mod integrator;
pub mod norms;
pub mod params;
pub mod qg;
pub mod snapshot;
pub mod solver2d;
pub mod solver3d;
pub mod strichartz;
pub mod wave;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use field::SpectralField;
pub use grid::BoxGrid;
pub use params::PhysicalParams;
