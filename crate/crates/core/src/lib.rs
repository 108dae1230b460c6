//! Simulation, compression and decoding of RIS-masked channel frequency
//! responses, plus MUSIC-based angle and delay estimation.

pub mod codebook;
pub mod codec;
pub mod config;
pub mod container;
pub mod decoder;
pub mod error;
pub mod hash;
pub mod metrics;
pub mod music;
pub mod pipeline;
pub mod scene;

pub use error::{Error, Result};
