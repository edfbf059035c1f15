//! Latent-space interpolation toolkit for variational autoencoders.
//!
//! The crate bundles a small reverse-mode differentiation kernel, image and
//! graph VAEs built on it, the interpolation algorithms under study, the
//! quality metrics, interpolation-aware training objectives, synthetic
//! datasets with a continuous attribute (rotation angle, citation time), and
//! the triplet evaluation harness that ties them together.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod exec;
pub mod iat;
pub mod interp;
pub mod metrics;
pub mod models;
pub mod ndkernel;
pub mod rng;

pub use error::{Error, IoError, Result};
