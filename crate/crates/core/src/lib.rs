//! 2D adaptive finite elements for time-discrete quasi-static phase-field
//! fracture.
//!
//! The crate provides a quadtree quadrilateral mesh with hanging-node
//! constraints, bilinear finite element spaces, the per-time-step elasticity
//! and phase-field obstacle solves, residual a posteriori error estimators
//! for both unknowns (the phase-field estimator is robust in the
//! regularization length `eps`), and the quasi-static benchmark drivers
//! (single-edge-notched tension and shear, L-shaped panel).
//!
//! All computation lives here; file formats, configuration and the command
//! line front end are in the companion `fracfield` crate.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("fracfield-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod elasticity;
pub mod error;
pub(crate) mod float;
pub mod geom;
pub mod mesh;
pub mod oracle;
pub mod phasefield;
pub mod quadrature;
pub mod sim;

pub mod fespace;

pub use error::{Error, Result};
