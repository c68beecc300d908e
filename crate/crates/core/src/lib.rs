//! Multiparametric conic linear optimization over products of nonnegative
//! orthants and PSD cones.

pub mod cones;
pub mod duality;
pub mod error;
pub mod exec;
pub mod io;
mod linalg;
mod serde_float;
pub mod mappings;
pub mod model;
pub mod partition;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
