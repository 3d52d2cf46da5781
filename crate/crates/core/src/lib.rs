//! Numerical toolkit for Darcy homogenization in perforated domains.

pub mod cell_problem;
pub mod corrector;
pub mod darcy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod micro;
pub mod numeric;
pub mod rates;
pub mod stokes;

pub use error::{Error, Result};
