//! Generic event boundary detection toolkit.

pub mod classifier;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod frame;
pub mod pipeline;
pub mod postprocess;
pub mod report;
pub mod synth;
pub mod tables;
pub mod window;

pub use error::{Error, Result};
