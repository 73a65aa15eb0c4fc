pub mod config;
pub mod dataset;
pub mod engine;
pub mod gpr;
pub mod error;
pub mod io_util;
pub mod metrics;
pub mod pcd;
pub mod study;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
