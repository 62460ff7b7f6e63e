//! Peak-hour load curve forecasting with stacked autoencoders, and battery
//! peak-shaving dispatch driven by the forecast.
//!
//! - [`curves`]: daily load curves, ingestion, augmentation, masking, splits
//!   and a synthetic duck-curve generator.
//! - [`nn`]: dense networks, losses (MSE, MAPE, weighted MSE) and SGD.
//! - [`sae`]: greedy pretraining, fine-tuning, masked-peak reconstruction and
//!   parameter sweeps.
//! - [`baselines`]: denoising autoencoder, ANN regressor and ELM.
//! - [`bess`]: the four dispatch strategies and the shaving-level metric.

pub mod baselines;
pub mod bess;
pub mod curves;
mod error;
pub mod nn;
pub mod sae;

pub use error::{Error, ErrorClass, Result};
