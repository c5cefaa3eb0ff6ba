//! Hegselmann-Krause opinion dynamics with strategic agents: exact and
//! floating-point dynamics, instance generators, controllers, a run engine
//! with invariant monitors, verification suites and scaling fits.

pub mod controllers;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod fit;
pub mod instances;
pub mod numeric;
pub mod verify;

pub use error::{HkError, Result};
pub use numeric::{Mode, Num};
