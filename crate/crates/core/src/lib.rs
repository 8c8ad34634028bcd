//! A desk-scale laboratory for deep feature forgetting in machine unlearning.
//!
//! The crate trains a small encoder–predictor classifier on synthetic
//! Gaussian-mixture data, unlearns a forget set with one-point contraction
//! (driving forget logits to the origin) or one of several gradient-based
//! baselines, and then probes how deep the forgetting went: least-squares
//! feature-map and head recovery attacks, gradient-matching inversion, linear
//! CKA, loss-threshold membership inference, and the entropy lower bound that
//! ties logit norm to predictive uncertainty.

pub mod attacks;
pub mod bounds;
pub mod data;
pub mod error;
pub mod evalsuite;
mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod train;
pub mod unlearn;

pub use error::{Error, Result};
