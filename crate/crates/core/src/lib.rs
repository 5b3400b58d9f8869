//! Numerical laboratory for KPP fronts perturbed by demographic noise.

pub mod dual;
pub mod error;
pub mod front;
pub mod kernel;
pub mod model;
pub mod ode;
pub mod par;
pub mod rng;
pub mod spde;
pub mod stats;
pub mod survival;
pub mod sweep;
pub mod wave;

pub use error::{Error, Result};
