//! Multilevel Picard (MLP) approximation for semilinear jump-diffusion PIDEs
//! and its compilation into explicit ReLU networks.
//!
//! The crate is organised around the pipeline
//! [`model`] → [`sde`] → [`mlp`] → [`compiler`], with [`randomness`]
//! addressing every draw by a θ-index and [`relunet`] providing the network
//! algebra the compiler builds on.

pub mod compiler;
pub mod config;
pub mod error;
pub mod linalg;
pub mod mlp;
pub mod model;
pub mod randomness;
pub mod relunet;
pub mod sde;

pub use error::{Error, Result};
