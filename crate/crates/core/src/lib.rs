pub mod config;
pub mod correction;
pub mod denoiser;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod search;
pub mod selftest;
pub mod theory;
pub mod wavelet;

pub use error::{Error, Result};
