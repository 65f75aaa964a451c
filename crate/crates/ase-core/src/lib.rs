//! Adversarial skill embeddings for a planar character.
//!
//! The crate pre-trains a latent-conditioned low-level control policy against
//! a motion dataset using an adversarial imitation + skill-discovery
//! objective, then reuses the frozen policy and discriminator to train
//! high-level task policies. Diagnostics cover dataset coverage, skill
//! transitions, and fall recovery.

pub mod env;
pub mod error;
pub mod latent;
pub mod motion;
pub mod nn;
pub mod objective;
pub mod rng;

pub use error::{Error, Result};
