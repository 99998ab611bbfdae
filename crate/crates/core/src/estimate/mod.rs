//! Least-squares estimators for scan and precession data.

mod lm;
mod models;

pub use lm::*;
pub use models::*;
