//! Numerical laboratory for Kochergin special flows: an irrational rotation
//! of the circle under a roof with a symmetric power singularity.

pub mod arithmetic;
pub mod badset;
pub mod correlation;
pub mod error;
pub mod flow;
pub mod numerics;
pub mod observables;
pub mod roof;
pub mod spectral;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
