//! Pseudo-solid Newton solver for the exterior Bernoulli free boundary
//! problem, with RBF level-set design of the inner inclusion.

pub mod analytic;
pub mod config;
pub mod dual;
pub mod error;
pub mod mesh;
pub mod objective;
pub mod optimize;
pub mod rbf;
pub mod sensitivity;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
