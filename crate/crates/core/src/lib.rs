//! Fourier-Galerkin tools for S^1-families of critical points of the twisted
//! Hamiltonian action functional on complex projective space.

pub mod action;
pub mod cuplength;
pub mod error;
pub mod field;
pub mod hamiltonian;
pub mod homotopy;
pub mod loop_space;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
