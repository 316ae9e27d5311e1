//! Multi-feature-matching GAN representation learning.
//!
//! The crate bundles a small reverse-mode autodiff engine, the generator and
//! discriminator networks with a multi-feature fusion layer, the adversarial
//! training loop with perceptual and feature-matching objectives, and the
//! downstream linear L2-SVM evaluation protocol.

pub mod autodiff;
pub mod classify;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
