//! GARCH(1,1) on minutely log returns, mapped to log range by a fitted scale.
//!
//! Parameters are estimated by maximizing the Gaussian quasi-log-likelihood
//! `-1/2 * sum(ln s2_t + r_t^2 / s2_t)` with Nelder-Mead on the unconstrained
//! coordinates `(ln omega, u, v)` where
//! `alpha = c * e^u / (1 + e^u + e^v)`, `beta = c * e^v / (1 + e^u + e^v)` and
//! `c = 0.999`, which keeps every iterate inside `alpha + beta <= 0.999`.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::ar::CellForecast;
use super::nelder_mead::{self, NelderMeadConfig};
use crate::error::{Error, Result};
use crate::features::SampleKey;
use crate::market_data::{RangePanel, ReturnPanel, MINUTES_PER_DAY};
use crate::math;

pub const VARIANCE_FLOOR: f64 = 1e-12;
const PERSISTENCE_CAP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchModel {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Multiplies the predicted conditional standard deviation to give a log range.
    pub range_scale: f64,
}

impl GarchModel {
    #[inline]
    pub fn next_variance(&self, last_return: f64, last_variance: f64) -> f64 {
        (self.omega + self.alpha * last_return * last_return + self.beta * last_variance).max(VARIANCE_FLOOR)
    }
}

/// How conditional volatility is turned into a log-range forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMap {
    /// No-intercept least squares of realised log range on predicted sigma over the training cells.
    Fitted,
    /// Expected range of Brownian motion over one step, `sqrt(8 / pi) * sigma`.
    Brownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchConfig {
    pub max_iter: usize,
    /// Absolute tolerance on the mean log-likelihood.
    pub tolerance: f64,
    pub range_map: RangeMap,
}

impl Default for GarchConfig {
    fn default() -> Self {
        GarchConfig { max_iter: 500, tolerance: 1e-8, range_map: RangeMap::Fitted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub model: GarchModel,
    /// Mean Gaussian quasi-log-likelihood per observation (constants dropped).
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Best mean log-likelihood after each optimizer iteration.
    pub likelihood_trace: Vec<f64>,
    pub optimizer: String,
}

/// Conditional variances `s2_t` of `r_t`, starting from `initial_variance`.
pub fn variance_path(model: &GarchModel, returns: &[f64], initial_variance: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut s2 = initial_variance.max(VARIANCE_FLOOR);
    for (i, _) in returns.iter().enumerate() {
        if i > 0 {
            s2 = model.next_variance(returns[i - 1], s2);
        }
        out.push(s2);
    }
    out
}

/// Mean quasi-log-likelihood of `returns` under `model`.
pub fn mean_log_likelihood(model: &GarchModel, returns: &[f64], initial_variance: f64) -> f64 {
    let mut s2 = initial_variance.max(VARIANCE_FLOOR);
    let mut acc = 0.0;
    for (i, r) in returns.iter().enumerate() {
        if i > 0 {
            s2 = model.next_variance(returns[i - 1], s2);
        }
        acc += math::ln(s2) + r * r / s2;
    }
    -0.5 * acc / returns.len() as f64
}

fn to_params(x: &[f64]) -> (f64, f64, f64) {
    let eu = math::exp(x[1].clamp(-50.0, 50.0));
    let ev = math::exp(x[2].clamp(-50.0, 50.0));
    let s = 1.0 + eu + ev;
    (math::exp(x[0]), PERSISTENCE_CAP * eu / s, PERSISTENCE_CAP * ev / s)
}

fn from_params(omega: f64, alpha: f64, beta: f64) -> [f64; 3] {
    let a = alpha / PERSISTENCE_CAP;
    let b = beta / PERSISTENCE_CAP;
    let rest = 1.0 - a - b;
    [math::ln(omega), math::ln(a / rest), math::ln(b / rest)]
}

/// Fits `(omega, alpha, beta)` to a return series. `range_scale` is left at 1.
pub fn fit_garch(returns: &[f64], cfg: &GarchConfig) -> Result<GarchFit> {
    if returns.len() < 1000 {
        return Err(Error::InsufficientHistory { needed: 1000, got: returns.len() });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(String::from("non-finite return")));
    }
    let var0 = sample_variance(returns);
    if !(var0 > VARIANCE_FLOOR) {
        return Err(Error::DegenerateFit(String::from("return variance below the variance floor")));
    }
    let objective = |x: &[f64]| {
        let (omega, alpha, beta) = to_params(x);
        let model = GarchModel { omega, alpha, beta, range_scale: 1.0 };
        -mean_log_likelihood(&model, returns, var0)
    };
    let nm = NelderMeadConfig { max_iter: cfg.max_iter, f_tol: cfg.tolerance, initial_step: 0.5 };
    let x0 = from_params(var0 * 0.05, 0.05, 0.90);
    let first = nelder_mead::minimize(objective, &x0, &nm).map_err(negate_trace)?;
    // One restart from the optimum guards against a collapsed simplex.
    let remaining = cfg.max_iter.saturating_sub(first.iterations).max(1);
    let nm2 = NelderMeadConfig { max_iter: remaining, initial_step: 0.1, ..nm };
    let second = nelder_mead::minimize(objective, &first.x, &nm2).map_err(|e| negate_trace(prepend(e, &first.trace)))?;
    let best = if second.value <= first.value { &second } else { &first };
    let (omega, alpha, beta) = to_params(&best.x);
    let mut trace: Vec<f64> = first.trace.iter().map(|v| -v).collect();
    let floor = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
    trace.extend(second.trace.iter().map(|v| (-v).max(floor)));
    Ok(GarchFit {
        model: GarchModel { omega, alpha, beta, range_scale: 1.0 },
        log_likelihood: -best.value,
        iterations: first.iterations + second.iterations,
        likelihood_trace: trace,
        optimizer: String::from("nelder_mead(ln_omega, logit_simplex(alpha, beta))"),
    })
}

fn prepend(e: Error, head: &[f64]) -> Error {
    match e {
        Error::ConvergenceFailure(mut s) => {
            let mut t = head.to_vec();
            t.extend(s.likelihood_trace.iter().copied());
            s.likelihood_trace = t;
            Error::ConvergenceFailure(s)
        }
        other => other,
    }
}

/// The optimizer minimizes the negative likelihood; report the likelihood itself.
fn negate_trace(e: Error) -> Error {
    match e {
        Error::ConvergenceFailure(mut s) => {
            s.likelihood_trace.iter_mut().for_each(|v| *v = -*v);
            let (omega, alpha, beta) = to_params(&s.last_iterate);
            s.last_iterate = alloc::vec![omega, alpha, beta];
            Error::ConvergenceFailure(s)
        }
        other => other,
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = math::mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// `range_scale * sqrt(omega + alpha r^2 + beta s2)`.
pub fn predict_garch_range(model: &GarchModel, last_return: f64, last_variance: f64) -> f64 {
    model.range_scale * math::sqrt(model.next_variance(last_return, last_variance))
}

/// Predicted conditional sigma for every cell of `days`, filtered
/// chronologically through observed returns starting at the first day of the panel.
fn sigma_forecasts(model: &GarchModel, returns: &ReturnPanel, initial_variance: f64, days: Range<usize>) -> Vec<(SampleKey, f64)> {
    let mut state: Option<(f64, f64)> = None;
    let mut out = Vec::new();
    for d in 0..days.end {
        for t in 0..MINUTES_PER_DAY {
            let s2 = match state {
                None => initial_variance.max(VARIANCE_FLOOR),
                Some((r, v)) => model.next_variance(r, v),
            };
            if d >= days.start {
                out.push((SampleKey { day: d, minute: t as u16 }, math::sqrt(s2)));
            }
            if let Some(r) = returns.get(t, d) {
                state = Some((r, s2));
            }
        }
    }
    out
}

/// Fits GARCH on the training days' returns, then the range scale on the
/// training days' log ranges.
pub fn fit_garch_model(returns: &ReturnPanel, ranges: &RangePanel, train: Range<usize>, cfg: &GarchConfig) -> Result<(GarchFit, f64)> {
    if returns.days != ranges.days {
        return Err(Error::InvalidArgument(String::from("return and range panels are not aligned")));
    }
    let series = returns.observed_series(train.clone());
    let var0 = sample_variance(&series);
    let mut fit = fit_garch(&series, cfg)?;
    let scale = match cfg.range_map {
        RangeMap::Brownian => math::sqrt(8.0 / core::f64::consts::PI),
        RangeMap::Fitted => {
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (key, sigma) in sigma_forecasts(&fit.model, returns, var0, train) {
                if let Some(v) = ranges.get(key.minute as usize, key.day) {
                    sxy += v * sigma;
                    sxx += sigma * sigma;
                }
            }
            if !(sxx > 0.0) {
                return Err(Error::DegenerateFit(String::from("no training ranges to fit the range scale")));
            }
            sxy / sxx
        }
    };
    fit.model.range_scale = scale;
    Ok((fit, var0))
}

/// Log-range forecasts for every observed range cell in `days`.
pub fn garch_forecasts(model: &GarchModel, initial_variance: f64, returns: &ReturnPanel, ranges: &RangePanel, days: Range<usize>) -> Vec<CellForecast> {
    sigma_forecasts(model, returns, initial_variance, days)
        .into_iter()
        .filter_map(|(key, sigma)| {
            ranges
                .get(key.minute as usize, key.day)
                .map(|target| CellForecast { key, target, prediction: model.range_scale * sigma })
        })
        .collect()
}
