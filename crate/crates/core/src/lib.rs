//! Lateral dynamics of an all-wheel-steered vehicle with distributed tire
//! deformation: plant simulation, frequency-domain stability analysis,
//! observer-based steering control and scenario tooling.

pub mod control;
pub mod error;
pub mod freq;
pub mod lambert;
pub mod observer;
pub mod plant;
pub mod scenario;
pub mod tire;
pub mod vehicle;

pub use error::{Error, Result};
