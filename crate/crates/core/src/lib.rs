//! Global solution of nonlinear systems `f(x) = y` by lifting straight codomain
//! segments, with ball-inclusion certificates built from the surjectivity
//! indicator and sampled diagnostics for classical global inversion conditions.

pub mod certificates;
pub mod cli;
pub mod error;
pub mod global_solver;
pub mod indicators;
pub mod lifting;
pub mod map_model;
pub mod sampling;

pub use error::{Error, Result};
