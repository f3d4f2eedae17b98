//! Simulation toolkit for multi-UAV predictive crime deterrence and
//! packet-loss-resilient distributed inference.
//!
//! * [`nn`]: tensors, layers and optimizers with manual backpropagation.
//! * [`crime`]: crime CSV ingestion, windowing, year folding, block counts.
//! * [`world`]: placement grid, relay connectivity, sensing and deterrence.
//! * [`predictor`]: LSTM per-block crime-count forecaster.
//! * [`env`]: episodic placement environment and its JSON-lines protocol.
//! * [`ppo`]: PPO trainer over factored per-UAV actions.
//! * [`di`]: split inference over lossy links with dropout fine-tuning.

pub mod crime;
pub mod di;
pub mod env;
pub mod error;
pub mod io;
pub mod nn;
pub mod par;
pub mod ppo;
pub mod predictor;
pub mod rng;
pub mod world;

pub use error::{Error, ErrorClass, Result};
