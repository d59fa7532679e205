//! Intrinsic-robustness bounds for data distributions captured by conditional
//! generative models.
//!
//! The crate covers the full desk-scale pipeline: Gaussian isoperimetry
//! primitives ([`gaussian`]), generators with exact latent gradients
//! ([`genmodel`]), sampled local Lipschitz estimation ([`lipschitz`]), closed
//! form robustness bounds ([`bounds`]), toy classifiers and training
//! ([`classify`]), unconstrained and on-manifold attacks ([`attacks`]) and
//! Monte Carlo risk estimators ([`risk`]).

pub mod attacks;
pub mod bounds;
pub mod classify;
pub mod error;
pub mod gaussian;
pub mod genmodel;
pub mod linalg;
pub mod lipschitz;
pub mod nn;
pub mod risk;

mod container;

pub use error::{Error, Result};
