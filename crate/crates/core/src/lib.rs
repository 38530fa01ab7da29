//! Numerical core for intraday FX volatility forecasting on minutely log ranges.
//!
//! The crate is `no_std` (it needs `alloc`). All transcendental functions go
//! through [`libm`] so results do not depend on the platform's libm, and all
//! randomness comes from seeded ChaCha8 streams.
//!
//! Layout:
//! - [`market_data`]: minute bars, the log-range proxy and the 1440-minute panel grid.
//! - [`features`]: calendar features, lag windows, min-max normalization.
//! - [`analysis`]: minute profiles, autocorrelations, cross-pair correlations.
//! - [`baselines`]: AR(p) least squares and GARCH(1,1) quasi-maximum-likelihood.
//! - [`neural`]: dense layers, LSTM cells, exact gradients, Adam and the training loop.
//! - [`model_zoo`]: the seven forecaster families behind one fit/forecast interface.
//! - [`evaluation`]: blocked chronological folds, MSE, Diebold-Mariano, sensitivity sweeps.
//! - [`synth`]: seeded synthetic generators used as test oracles.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod baselines;
pub mod date;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod market_data;
pub mod math;
pub mod model_zoo;
pub mod neural;
pub mod rng;
pub mod synth;

pub use date::Date;
pub use error::{Error, Result};
pub use market_data::{MinuteBar, RangePanel, ReturnPanel, MINUTES_PER_DAY};
