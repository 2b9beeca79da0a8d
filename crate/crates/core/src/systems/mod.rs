//! Built-in example families.

pub mod liouville;
pub mod oscillator;
pub mod thermo;

pub use liouville::{liouville_restriction_check, sphere, LiouvilleReport, LiouvilleSpec};
pub use oscillator::{damped_oscillator, OscillatorFamily, OscillatorModel, OscillatorSpec};
pub use thermo::{thermo_system, ThermoModel, ThermoSpec};
