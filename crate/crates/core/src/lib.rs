//! Coupled Reynolds / Rayleigh-Plesset model of a bubbly lubricant film:
//! transient integration, stationary solutions and linear stability.

pub mod cli;
pub mod elliptic;
pub mod error;
pub mod dynamics;
pub mod grid;
pub mod linalg;
pub mod physics;
pub mod stability;
pub mod stationary;

pub use error::{Error, Result};
