//! Cooling of coupled mechanical and electrical oscillators by a driven
//! superconducting qubit: circuit parameters, Lindblad models, adiabatic
//! elimination, steady states and emission spectra.

pub mod adiabatic;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod spectrum;
pub mod steady;

pub use error::{Error, ErrorClass, Result};
