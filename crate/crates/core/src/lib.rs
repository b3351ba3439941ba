pub mod config;
pub mod decision;
pub mod error;
pub mod esc;
pub mod experiment;
pub mod kriging;
pub mod prob;
pub mod record;
pub mod rng;
pub mod trainer;
pub mod truss;

pub use error::{Error, Result};
