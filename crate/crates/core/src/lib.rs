//! Room-acoustics toolkit: shoebox image-source simulation, Schroeder energy
//! decay analysis, dataset generation, and an LSTM regressor that maps 16 room
//! features to a normalized energy decay curve.
//!
//! The pipeline is
//! [`room`] → [`ism`] → [`decay`] → [`dataset`] → [`nn`] → [`eval`],
//! with [`pipeline`] wiring the stages together for the command-line front end.

pub mod dataset;
pub mod decay;
mod error;
pub mod eval;
pub mod ism;
pub mod nn;
pub mod pipeline;
pub mod room;

pub use error::{Error, Result};

/// Sample rate used for every simulated impulse response.
pub const SAMPLE_RATE_HZ: u32 = 44_100;
