//! Latent-trait models for predicting binary exam responses.
//!
//! Point models (Rasch ability–difficulty, multidimensional interaction and
//! class interaction) are fitted by SGD on the Bernoulli likelihood; their
//! variational counterparts place Gaussian posteriors over student-side
//! latents and ascend a reparameterized Monte Carlo ELBO. Around them sit
//! CSV ingestion, synthetic data generation, evaluation metrics, a
//! two-proportion z-test, embedding similarity analysis and a pool-based
//! active learning loop.

pub mod active;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod manifest;
pub mod models;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod vi;

pub use error::{Error, Result};
