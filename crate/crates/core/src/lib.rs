pub mod backends;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hazard;
pub mod io;
pub mod memory;
pub mod quad;
pub mod rng;
pub mod solutions;
pub mod special;
pub mod stats;
pub mod synth;
pub mod vector;

pub use error::{Error, Result};
