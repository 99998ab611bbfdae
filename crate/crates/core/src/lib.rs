//! Collective cavity QED of ion Coulomb crystals.
//!
//! Forward models for the steady-state and transient cavity response of an
//! ensemble of ions in a single optical mode, the effective ion number of
//! spheroidal crystals, Doppler averaging, Zeeman-sublevel precession,
//! synthetic measurement pipelines and least-squares estimators.
//!
//! Rates are angular frequencies in rad/s throughout; [`units::mhz`] converts
//! from the customary "2π × MHz".

pub mod cli;
pub mod config;
pub mod cqed;
pub mod crystal;
pub mod error;
pub mod estimate;
pub mod expsim;
pub mod larmor;
pub mod motion;
pub mod quadrature;
pub mod trace;
pub mod units;

pub use error::{Error, Result};
