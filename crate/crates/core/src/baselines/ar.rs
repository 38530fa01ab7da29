use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SampleKey;
use crate::linalg;
use crate::math;
use crate::market_data::{RangePanel, MINUTES_PER_DAY};

/// `y_t = c + sum_i phi_i * y_{t-i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub intercept: f64,
    /// `coefficients[i]` multiplies `y_{t-1-i}`.
    pub coefficients: Vec<f64>,
}

/// Least-squares AR(p) with intercept on one contiguous series.
pub fn fit_ar(series: &[f64], p: usize) -> Result<ArModel> {
    if series.len() <= p + 10 {
        return Err(Error::InsufficientHistory { needed: p + 11, got: series.len() });
    }
    fit_ar_segments(&[series], p)
}

/// Least-squares AR(p) over several contiguous segments; regressions never
/// span two segments.
pub fn fit_ar_segments<S: AsRef<[f64]>>(segments: &[S], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::InvalidArgument(String::from("AR order must be >= 1")));
    }
    let k = p + 1;
    let mut design = Vec::new();
    let mut target = Vec::new();
    for seg in segments {
        let seg = seg.as_ref();
        for t in p..seg.len() {
            design.push(1.0);
            for i in 1..=p {
                design.push(seg[t - i]);
            }
            target.push(seg[t]);
        }
    }
    let n = target.len();
    if n <= p + 10 {
        return Err(Error::InsufficientHistory { needed: p + 11, got: n });
    }
    let beta = linalg::least_squares(&design, &target, n, k)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularFit);
    }
    Ok(ArModel { order: p, intercept: beta[0], coefficients: beta[1..].to_vec() })
}

/// One-step forecast from a chronological window; only its last `p` values are used.
pub fn predict_ar(model: &ArModel, window: &[f64]) -> Result<f64> {
    if window.len() < model.order {
        return Err(Error::InsufficientHistory { needed: model.order, got: window.len() });
    }
    let last = window.len() - 1;
    Ok(model.intercept + model.coefficients.iter().enumerate().map(|(i, phi)| phi * window[last - i]).sum::<f64>())
}

/// Maximal runs of observed minutes inside each day of `days`.
pub fn panel_segments(panel: &RangePanel, days: Range<usize>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for d in days {
        let mut run = Vec::new();
        for t in 0..MINUTES_PER_DAY {
            match panel.get(t, d) {
                Some(v) => run.push(v),
                None => {
                    if !run.is_empty() {
                        out.push(core::mem::take(&mut run));
                    }
                }
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}

/// A forecast of one panel cell in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellForecast {
    pub key: SampleKey,
    pub target: f64,
    pub prediction: f64,
}

/// Forecasts every cell of `days` preceded by `p` observed minutes of the same day.
pub fn ar_forecasts(model: &ArModel, panel: &RangePanel, days: Range<usize>) -> Vec<CellForecast> {
    let p = model.order;
    let mut out = Vec::new();
    for d in days {
        let vals = panel.day_values(d);
        let mask = panel.day_mask(d);
        let mut run = 0usize;
        for t in 0..MINUTES_PER_DAY - 1 {
            run = if mask[t] { run + 1 } else { 0 };
            if run >= p && mask[t + 1] {
                let window = &vals[t + 1 - p..=t];
                let prediction = predict_ar(model, window).expect("window has p values");
                out.push(CellForecast { key: SampleKey { day: d, minute: (t + 1) as u16 }, target: vals[t + 1], prediction });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArTuning {
    pub order: usize,
    /// `(order, validation MSE)` for every order that fitted.
    pub validation_mse: Vec<(usize, f64)>,
}

/// Picks the smallest order whose validation loss is within one standard error
/// of the best order's. Every order is scored on the same validation cells
/// (those with enough same-day history for the largest order), and the
/// standard error is that of the paired per-cell loss difference.
pub fn tune_ar_order(panel: &RangePanel, orders: &[usize], train: Range<usize>, validation: Range<usize>) -> Result<ArTuning> {
    let segments = panel_segments(panel, train);
    let mut fitted = Vec::new();
    for &p in orders {
        if let Ok(model) = fit_ar_segments(&segments, p) {
            fitted.push(model);
        }
    }
    let deepest = fitted.iter().map(|m| m.order).max().ok_or(Error::TuningFailed)?;
    let common: BTreeSet<SampleKey> = fitted
        .iter()
        .find(|m| m.order == deepest)
        .map(|m| ar_forecasts(m, panel, validation.clone()).into_iter().map(|f| f.key).collect())
        .unwrap_or_default();
    if common.is_empty() {
        return Err(Error::TuningFailed);
    }
    let losses: Vec<(usize, Vec<f64>)> = fitted
        .iter()
        .map(|m| {
            let e = ar_forecasts(m, panel, validation.clone())
                .into_iter()
                .filter(|f| common.contains(&f.key))
                .map(|f| (f.prediction - f.target) * (f.prediction - f.target))
                .collect();
            (m.order, e)
        })
        .collect();
    let means: Vec<(usize, f64)> = losses.iter().map(|(p, e)| (*p, e.iter().sum::<f64>() / e.len() as f64)).collect();
    let best = (0..means.len()).fold(0, |b, i| if means[i].1 < means[b].1 { i } else { b });
    let order = losses
        .iter()
        .filter(|(_, e)| {
            let n = e.len() as f64;
            let d: Vec<f64> = e.iter().zip(&losses[best].1).map(|(a, b)| a - b).collect();
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            mean <= math::sqrt(var / n)
        })
        .map(|(p, _)| *p)
        .min()
        .expect("the best order qualifies");
    Ok(ArTuning { order, validation_mse: means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::rng::{seeded, standard_normal};
    use alloc::vec;

    #[test]
    fn exact_geometric_series() {
        let mut y = vec![1.0];
        for _ in 0..40 {
            y.push(0.5 * y.last().unwrap());
        }
        let m = fit_ar(&y, 1).unwrap();
        assert!((m.coefficients[0] - 0.5).abs() < 1e-9);
        assert!(m.intercept.abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_singular() {
        assert_eq!(fit_ar(&[2.0; 50], 1), Err(Error::SingularFit));
        assert!(matches!(fit_ar(&[1.0, 2.0, 3.0], 1), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn white_noise_coefficient_near_zero() {
        let mut rng = seeded(21);
        let n = 20_000;
        let y: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let m = fit_ar(&y, 1).unwrap();
        assert!(m.coefficients[0].abs() < 3.0 / math::sqrt(n as f64));
    }

    #[test]
    fn prediction_examples() {
        let identity = ArModel { order: 1, intercept: 0.0, coefficients: vec![1.0] };
        assert_eq!(predict_ar(&identity, &[0.3]).unwrap(), 0.3);
        let constant = ArModel { order: 1, intercept: 1.0, coefficients: vec![0.0] };
        assert_eq!(predict_ar(&constant, &[42.0]).unwrap(), 1.0);
        let two = ArModel { order: 2, intercept: 0.0, coefficients: vec![0.5, 0.25] };
        assert!((predict_ar(&two, &[0.4, 0.8]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(predict_ar(&two, &[0.4]), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let mut rng = seeded(5);
        let mut y = vec![0.0, 0.0];
        for _ in 0..5000 {
            let n = y.len();
            y.push(1.0 + 0.4 * y[n - 1] - 0.2 * y[n - 2] + standard_normal(&mut rng));
        }
        let m = fit_ar(&y, 2).unwrap();
        let mut xte = [0.0; 3];
        let count = y.len() - 2;
        for t in 2..y.len() {
            let e = y[t] - predict_ar(&m, &y[..t]).unwrap();
            xte[0] += e;
            xte[1] += e * y[t - 1];
            xte[2] += e * y[t - 2];
        }
        for v in xte {
            assert!((v / count as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn singleton_order_grid() {
        let mut rng = seeded(8);
        let values = (0..3 * MINUTES_PER_DAY).map(|_| 2.0 + 0.1 * standard_normal(&mut rng)).collect();
        let start = crate::date::Date::from_ymd(2018, 1, 1).unwrap();
        let days = (0..3).map(|i| start.add_days(i)).collect();
        let panel = RangePanel::dense("P", days, values).unwrap();
        assert_eq!(tune_ar_order(&panel, &[4], 0..2, 2..3).unwrap().order, 4);
    }
}
