//! Anharmonicity transfer from Kerr-type quantum-well dipoles to a driven,
//! lossy cavity.
//!
//! The crate integrates the mean-field and Lindblad descriptions of `N`
//! anharmonic dipoles coupled to a single cavity mode, and extracts the
//! drive-dependent phase of the free-induction decay.

pub mod error;
pub mod experiment;
pub mod lindblad;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
pub use model::{CavityParams, DipoleParams, Frame, PulseParams, SystemConfig};
