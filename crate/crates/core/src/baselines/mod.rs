//! Classical benchmarks: AR(p) by least squares and GARCH(1,1) by Gaussian QMLE.

pub mod ar;
pub mod garch;
pub mod nelder_mead;

pub use ar::{fit_ar, fit_ar_segments, predict_ar, tune_ar_order, ArModel, ArTuning};
pub use garch::{fit_garch, fit_garch_model, predict_garch_range, GarchConfig, GarchFit, GarchModel, RangeMap};
