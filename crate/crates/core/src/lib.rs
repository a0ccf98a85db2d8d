//! Numerical laboratory for the renormalization-group map of the Dyson
//! hierarchical model: fixed points, linearized spectra, critical points and
//! critical exponents.

pub mod critparam;
pub mod density;
pub mod error;
pub mod fixedpoint;
pub mod model;
pub mod rgflow;
pub mod spectral;

pub use error::{Result, RgError};
