//! Contextual anomaly detection for multivariate wearable and ambient time
//! series.
//!
//! Future target values are masked and imputed by a small dual-attention
//! transformer; the reconstruction error becomes the anomaly score, and a
//! peaks-over-threshold fit turns scores into alerts.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod par;
pub mod series;
pub mod tokenizer;

pub use error::{Error, Result};
