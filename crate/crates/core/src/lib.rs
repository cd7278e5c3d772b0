//! Simulator for consensus-based distributed active and passive beamforming
//! in wideband cell-free MISO downlinks assisted by several RISs.

pub mod channel;
pub mod circuit;
pub mod consensus;
pub mod error;
pub mod experiment;
pub mod model;
pub mod orchestrator;
pub mod precoder;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
