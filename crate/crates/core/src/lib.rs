//! Numerical library for analytic quasi-periodic linear cocycles:
//! Lyapunov spectra, annulus measurements of determinants, and certified
//! lower bounds on the largest exponents of band-lattice models.

pub mod bounds;
pub mod error;
pub mod jets;
pub mod laurent;
pub mod lyapunov;
pub mod matrix;
pub mod models;

pub use error::{Error, Result};
