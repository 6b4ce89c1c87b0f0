//! Series-expansion pricing of derivatives under stochastic volatility models.
//!
//! A price under a model without a usable closed form is approximated by the
//! closed-form price under a simpler baseline model plus correction terms
//! built from repeated application of the true model's generator.

pub mod closedform;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fourier;
pub mod kmcore;
pub mod mc;
pub mod models;
pub mod symx;

pub use error::{Error, Result};
