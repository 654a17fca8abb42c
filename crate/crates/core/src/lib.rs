//! Learning dynamic initial margin from noisy Monte Carlo labels.
//!
//! The crate simulates short-rate scenarios, prices interest rate swaps along
//! them, computes SIMM-style delta margin, and trains a multi-output network
//! that maps an initial market state to the whole discounted DIM profile.

pub mod dataset;
pub mod dimengine;
pub mod error;
pub mod experiment;
pub mod instruments;
pub mod mva;
pub mod neuralnet;
pub mod ratemodel;
pub mod rng;
pub mod simm;
pub mod termstructure;

pub use error::{Error, Result};
