//! Blocked chronological cross-validation, raw-unit MSE, Diebold-Mariano tests
//! and the lag sensitivity sweep.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::error::{Error, Result};
use crate::math;
use crate::model_zoo::{fit, MarketData, MeanStd, ModelSpec, PairForecast, TrainedModel};

/// Train/validation/test day ranges of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub index: usize,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl FoldSplit {
    /// Every day the fold touches.
    pub fn span(&self) -> Range<usize> {
        self.train.start..self.test.end
    }
}

pub const DEFAULT_RATIOS: (f64, f64) = (0.6, 0.3);

fn floor_share(ratio: f64, n: usize) -> usize {
    math::floor(ratio * n as f64 + 1e-9) as usize
}

/// `k` disjoint chronological blocks, each split 0.6/0.3/0.1.
pub fn blocked_splits(num_days: usize, k: usize) -> Result<Vec<FoldSplit>> {
    blocked_splits_with(num_days, k, DEFAULT_RATIOS)
}

/// As [`blocked_splits`] with custom train and validation shares; test takes the rest.
pub fn blocked_splits_with(num_days: usize, k: usize, ratios: (f64, f64)) -> Result<Vec<FoldSplit>> {
    let (rt, rv) = ratios;
    if k == 0 || !(rt > 0.0 && rv > 0.0 && rt + rv < 1.0) {
        return Err(Error::Split(format!("bad split parameters k={} ratios=({}, {})", k, rt, rv)));
    }
    if num_days < k * 10 {
        return Err(Error::Split(format!("{} days is too few for {} folds (need {})", num_days, k, k * 10)));
    }
    let block = num_days / k;
    let mut out = Vec::with_capacity(k);
    for index in 0..k {
        let start = index * block;
        let end = if index + 1 == k { num_days } else { start + block };
        let n = end - start;
        let n_train = floor_share(rt, n);
        let n_val = floor_share(rv, n);
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::Split(format!("block of {} days leaves an empty partition", n)));
        }
        out.push(FoldSplit {
            index,
            train: start..start + n_train,
            validation: start + n_train..start + n_train + n_val,
            test: start + n_train + n_val..end,
        });
    }
    Ok(out)
}

/// One scored forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub pair: String,
    pub date: Date,
    pub day: usize,
    pub minute: u16,
    pub target: f64,
    pub prediction: f64,
    pub squared_error: f64,
}

/// Converts raw forecasts into error records labelled with pair names and dates.
pub fn score_forecasts(forecasts: &[PairForecast], data: &MarketData<'_>) -> Vec<ErrorRecord> {
    forecasts
        .iter()
        .map(|f| {
            let panel = &data.ranges[f.pair];
            let e = f.prediction - f.target;
            ErrorRecord {
                pair: panel.pair.clone(),
                date: panel.days[f.key.day],
                day: f.key.day,
                minute: f.key.minute,
                target: f.target,
                prediction: f.prediction,
                squared_error: e * e,
            }
        })
        .collect()
}

/// Mean squared error of a record set; `None` when empty.
pub fn mse(records: &[ErrorRecord]) -> Option<f64> {
    if records.is_empty() {
        None
    } else {
        Some(records.iter().map(|r| r.squared_error).sum::<f64>() / records.len() as f64)
    }
}

/// Test-set result of one model on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEvaluation {
    pub fold: usize,
    pub model: String,
    /// Per-pair test MSE in original units.
    pub mse: Vec<(String, f64)>,
    pub records: Vec<ErrorRecord>,
}

/// Per-pair MSE in first-seen order.
pub fn mse_by_pair(records: &[ErrorRecord]) -> Vec<(String, f64)> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.pair.as_str()).or_insert_with(|| {
            order.push(r.pair.clone());
            (0.0, 0)
        });
        e.0 += r.squared_error;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|p| {
            let (s, n) = acc[p.as_str()];
            (p, s / n as f64)
        })
        .collect()
}

/// Scores an already trained model on the split's test days.
pub fn score_model(model: &TrainedModel, data: &MarketData<'_>, split: &FoldSplit) -> Result<FoldEvaluation> {
    let forecasts = model.forecast(data, split.test.clone())?;
    if forecasts.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let records = score_forecasts(&forecasts, data);
    Ok(FoldEvaluation { fold: split.index, model: String::from(model.spec.family.tag()), mse: mse_by_pair(&records), records })
}

/// Fits on train (+ validation for early stopping or tuning), then scores on test.
pub fn evaluate_model(spec: &ModelSpec, data: &MarketData<'_>, pair: usize, split: &FoldSplit) -> Result<(TrainedModel, FoldEvaluation)> {
    let model = fit(spec, data, pair, split)?;
    let eval = score_model(&model, data, split)?;
    Ok((model, eval))
}

/// Mean and sample standard deviation of fold MSEs.
pub fn summarize(fold_mse: &[f64]) -> MeanStd {
    MeanStd::of(fold_mse)
}

/// Diebold-Mariano options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmOptions {
    /// Apply the Harvey-Leybourne-Newbold small-sample factor.
    pub harvey: bool,
}

pub const DM_CRITICAL_5PCT: f64 = 1.96;
pub const DM_MIN_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// Positive when the second model has lower loss. `None` when indeterminate.
    pub statistic: Option<f64>,
    pub mean_differential: f64,
    pub long_run_variance: f64,
    pub n: usize,
    pub bandwidth: usize,
    pub significant: bool,
    pub indeterminate: bool,
}

/// Bartlett-kernel Newey-West variance of the loss differential; bandwidth floor(n^(1/3)).
pub fn newey_west(d: &[f64]) -> (f64, usize) {
    let n = d.len();
    let bw = math::floor(math::cbrt(n as f64) + 1e-9) as usize;
    let mean = math::mean(d);
    let autocov = |k: usize| d[k..].iter().zip(d).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n as f64;
    let mut lrv = autocov(0);
    for k in 1..=bw.min(n.saturating_sub(1)) {
        lrv += 2.0 * (1.0 - k as f64 / (bw as f64 + 1.0)) * autocov(k);
    }
    (lrv.max(0.0), bw)
}

/// DM test on aligned squared-error series with differential `a - b`.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], opts: DmOptions) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::InvalidArgument(format!("error series differ in length: {} vs {}", errors_a.len(), errors_b.len())));
    }
    let n = errors_a.len();
    if n < DM_MIN_LEN {
        return Err(Error::InvalidArgument(format!("DM test needs at least {} aligned errors, got {}", DM_MIN_LEN, n)));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let mean = math::mean(&d);
    let (lrv, bandwidth) = newey_west(&d);
    let scale = d.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let indeterminate = !(lrv > 1e-20 * scale) || scale == 0.0;
    let statistic = if indeterminate {
        None
    } else {
        let mut s = mean / math::sqrt(lrv / n as f64);
        if opts.harvey {
            s *= math::sqrt((n as f64 - 1.0) / n as f64);
        }
        Some(s)
    };
    Ok(DmResult {
        statistic,
        mean_differential: mean,
        long_run_variance: lrv,
        n,
        bandwidth,
        significant: statistic.is_some_and(|s| s.abs() > DM_CRITICAL_5PCT),
        indeterminate,
    })
}

/// Squared errors of two models on the timestamps both forecast, chronological.
pub fn align_errors(a: &[ErrorRecord], b: &[ErrorRecord]) -> (Vec<f64>, Vec<f64>) {
    let index = |rs: &[ErrorRecord]| -> BTreeMap<(String, Date, u16), f64> {
        rs.iter().map(|r| ((r.pair.clone(), r.date, r.minute), r.squared_error)).collect()
    };
    let ia = index(a);
    let ib = index(b);
    let mut keyed: Vec<((Date, u16, String), f64, f64)> = ia
        .iter()
        .filter_map(|(k, ea)| ib.get(k).map(|eb| ((k.1, k.2, k.0.clone()), *ea, *eb)))
        .collect();
    keyed.sort_by(|x, y| x.0.cmp(&y.0));
    keyed.into_iter().map(|(_, ea, eb)| (ea, eb)).unzip()
}

/// One upper-triangle cell of the DM matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmCell {
    pub pair: String,
    pub row: String,
    pub col: String,
    pub result: Option<DmResult>,
    pub error: Option<String>,
}

/// Pairwise DM tests per currency pair; rows are earlier models, columns later ones.
pub fn dm_matrix(models: &[(String, Vec<ErrorRecord>)], opts: DmOptions) -> Result<Vec<DmCell>> {
    if models.len() < 2 {
        return Err(Error::InvalidArgument(String::from("DM matrix needs at least two models")));
    }
    let mut pairs: Vec<String> = Vec::new();
    for (_, recs) in models {
        for r in recs {
            if !pairs.contains(&r.pair) {
                pairs.push(r.pair.clone());
            }
        }
    }
    pairs.sort();
    let by_pair = |recs: &[ErrorRecord], pair: &str| recs.iter().filter(|r| r.pair == pair).cloned().collect::<Vec<_>>();
    let mut cells = Vec::new();
    for pair in &pairs {
        let split: Vec<Vec<ErrorRecord>> = models.iter().map(|(_, r)| by_pair(r, pair)).collect();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let (a, b) = align_errors(&split[i], &split[j]);
                let (result, error) = match dm_test(&a, &b, opts) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(format!("{}", e))),
                };
                cells.push(DmCell { pair: pair.clone(), row: models[i].0.clone(), col: models[j].0.clone(), result, error });
            }
        }
    }
    Ok(cells)
}

/// Min-max normalization of one curve; a flat curve maps to zeros and reports `true`.
pub fn normalize_curve(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > lo) {
        return (alloc::vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - lo) / (hi - lo)).collect(), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub lags: Vec<usize>,
    pub pairs: Vec<String>,
    /// `raw_mse[pair][lag]`, mean over folds.
    pub raw_mse: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
}

/// Test MSE per pair as a function of the shared lag `p = p_t = p_d`,
/// min-max normalized per pair across the grid.
pub fn sensitivity_sweep(base: &ModelSpec, lags: &[usize], data: &MarketData<'_>, pair: usize, splits: &[FoldSplit]) -> Result<SensitivityCurve> {
    if lags.is_empty() || splits.is_empty() {
        return Err(Error::InvalidArgument(String::from("sensitivity sweep needs lags and splits")));
    }
    let mut pairs: Vec<String> = Vec::new();
    let mut per_lag: Vec<Vec<f64>> = Vec::with_capacity(lags.len());
    for &p in lags {
        let mut spec = base.clone();
        spec.hyper.p_t = p;
        spec.hyper.p_d = p;
        let mut sums: Vec<f64> = alloc::vec![0.0; pairs.len()];
        for split in splits {
            let (_, eval) = evaluate_model(&spec, data, pair, split)?;
            if pairs.is_empty() {
                pairs = eval.mse.iter().map(|(n, _)| n.clone()).collect();
                sums = alloc::vec![0.0; pairs.len()];
            }
            for (name, v) in &eval.mse {
                if let Some(i) = pairs.iter().position(|p| p == name) {
                    sums[i] += v;
                }
            }
        }
        per_lag.push(sums.iter().map(|s| s / splits.len() as f64).collect());
    }
    let raw_mse: Vec<Vec<f64>> = (0..pairs.len()).map(|i| per_lag.iter().map(|row| row[i]).collect()).collect();
    let (normalized, degenerate) = raw_mse.iter().map(|c| normalize_curve(c)).unzip();
    Ok(SensitivityCurve { lags: lags.to_vec(), pairs, raw_mse, normalized, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SampleKey;
    use crate::market_data::RangePanel;
    use crate::rng::{seeded, standard_normal};
    use alloc::vec;
    use proptest::prelude::*;

    fn sizes(s: &FoldSplit) -> (usize, usize, usize) {
        (s.train.len(), s.validation.len(), s.test.len())
    }

    #[test]
    fn split_examples() {
        let s = blocked_splits(30, 3).unwrap();
        assert!(s.iter().all(|f| sizes(f) == (6, 3, 1)));
        let s = blocked_splits(100, 3).unwrap();
        assert_eq!(s.iter().map(sizes).collect::<Vec<_>>(), vec![(19, 9, 5), (19, 9, 5), (20, 10, 4)]);
        assert_eq!(s[2].span(), 66..100);
        assert!(matches!(blocked_splits(5, 3), Err(Error::Split(_))));
    }

    proptest! {
        #[test]
        fn splits_are_chronological(d in 30usize..2000, k in 1usize..4) {
            let splits = blocked_splits(d, k).unwrap();
            let mut prev_end = 0;
            for s in &splits {
                prop_assert_eq!(s.train.start, prev_end);
                prop_assert!(s.train.end == s.validation.start && s.validation.end == s.test.start);
                prop_assert!(!s.test.is_empty());
                let n = s.span().len();
                prop_assert_eq!(s.train.len(), (0.6 * n as f64 + 1e-9) as usize);
                prop_assert_eq!(s.validation.len(), (0.3 * n as f64 + 1e-9) as usize);
                prev_end = s.test.end;
            }
            prop_assert_eq!(prev_end, d);
        }
    }

    fn records_from(targets: &[f64], preds: &[f64]) -> Vec<ErrorRecord> {
        let panel = RangePanel::dense("EURUSD", vec![Date::from_ymd(2019, 1, 1).unwrap()], vec![0.0; 1440]).unwrap();
        let ranges = [panel];
        let data = MarketData::new(&ranges);
        let fc: Vec<PairForecast> = targets
            .iter()
            .zip(preds)
            .enumerate()
            .map(|(i, (&t, &p))| PairForecast { pair: 0, key: SampleKey { day: 0, minute: i as u16 }, target: t, prediction: p })
            .collect();
        score_forecasts(&fc, &data)
    }

    #[test]
    fn mse_examples() {
        let mut rng = seeded(3);
        let t: Vec<f64> = (0..500).map(|_| standard_normal(&mut rng)).collect();
        assert_eq!(mse(&records_from(&t, &t)), Some(0.0));
        let m = math::mean(&t);
        let var = t.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t.len() as f64;
        let got = mse(&records_from(&t, &vec![m; t.len()])).unwrap();
        assert!((got - var).abs() < 1e-12);
        let t10: Vec<f64> = t.iter().map(|x| 10.0 * x).collect();
        let got10 = mse(&records_from(&t10, &vec![10.0 * m; t.len()])).unwrap();
        assert!((got10 / got - 100.0).abs() < 1e-9);
        let doubled: Vec<f64> = t.iter().chain(&t).copied().collect();
        let got2 = mse(&records_from(&doubled, &vec![m; doubled.len()])).unwrap();
        assert!((got2 - got).abs() < 1e-12);
        assert_eq!(mse(&[]), None);
    }

    fn brute_dm(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let h = (0..=n).take_while(|h| h * h * h <= n).last().unwrap();
        let mut lrv = 0.0;
        for k in 0..=h {
            let w = if k == 0 { 1.0 } else { 2.0 * (1.0 - k as f64 / (h as f64 + 1.0)) };
            let mut g = 0.0;
            for t in k..n {
                g += (d[t] - m) * (d[t - k] - m);
            }
            lrv += w * g / n as f64;
        }
        m / (lrv / n as f64).sqrt()
    }

    #[test]
    fn dm_identical_is_indeterminate() {
        let e: Vec<f64> = (0..50).map(|i| (i as f64).sin().abs()).collect();
        let r = dm_test(&e, &e, DmOptions::default()).unwrap();
        assert!(r.indeterminate && r.statistic.is_none() && !r.significant);
        assert!(dm_test(&e[..5], &e[..5], DmOptions::default()).is_err());
    }

    #[test]
    fn dm_power_and_brute_force() {
        let mut rng = seeded(11);
        let n = 1000;
        let b: Vec<f64> = (0..n).map(|_| 1.0 + standard_normal(&mut rng)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 1.0 + standard_normal(&mut rng)).collect();
        let r = dm_test(&a, &b, DmOptions::default()).unwrap();
        let s = r.statistic.unwrap();
        assert!(s > 1.96);
        assert!((s - brute_dm(&a, &b)).abs() < 1e-9 * s.abs());
        assert_eq!(r.bandwidth, 10);
        let h = dm_test(&a, &b, DmOptions { harvey: true }).unwrap().statistic.unwrap();
        assert!((h - s * (999.0f64 / 1000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dm_antisymmetry_and_location() {
        let mut rng = seeded(12);
        let a: Vec<f64> = (0..300).map(|_| standard_normal(&mut rng).powi(2)).collect();
        let b: Vec<f64> = (0..300).map(|_| standard_normal(&mut rng).powi(2)).collect();
        let ab = dm_test(&a, &b, DmOptions::default()).unwrap().statistic.unwrap();
        let ba = dm_test(&b, &a, DmOptions::default()).unwrap().statistic.unwrap();
        assert_eq!(ab, -ba);
        let a2: Vec<f64> = a.iter().map(|x| x + 3.5).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + 3.5).collect();
        let shifted = dm_test(&a2, &b2, DmOptions::default()).unwrap().statistic.unwrap();
        assert!((shifted - ab).abs() < 1e-10);
    }

    #[test]
    fn dm_null_calibration() {
        let mut rejections = 0;
        for trial in 0..500u64 {
            let mut rng = seeded(1000 + trial);
            let a: Vec<f64> = (0..200).map(|_| standard_normal(&mut rng)).collect();
            let b: Vec<f64> = (0..200).map(|_| standard_normal(&mut rng)).collect();
            if dm_test(&a, &b, DmOptions::default()).unwrap().significant {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 500.0;
        assert!((0.02..=0.09).contains(&rate), "rate {}", rate);
    }

    #[test]
    fn alignment_uses_common_timestamps() {
        let a = records_from(&[1.0; 30], &[0.0; 30]);
        let b: Vec<ErrorRecord> = records_from(&[2.0; 30], &[0.0; 30]).into_iter().skip(5).collect();
        let (ea, eb) = align_errors(&a, &b);
        assert_eq!(ea.len(), 25);
        assert!(ea.iter().all(|&x| x == 1.0) && eb.iter().all(|&x| x == 4.0));
    }

    #[test]
    fn dm_matrix_layout() {
        let mut rng = seeded(5);
        let t: Vec<f64> = (0..40).map(|_| standard_normal(&mut rng)).collect();
        let models: Vec<(String, Vec<ErrorRecord>)> = (0..7)
            .map(|m| {
                let p: Vec<f64> = t.iter().map(|x| x + 0.1 * m as f64 + 0.05 * standard_normal(&mut rng)).collect();
                (format!("m{}", m), records_from(&t, &p))
            })
            .collect();
        let cells = dm_matrix(&models, DmOptions::default()).unwrap();
        assert_eq!(cells.len(), 21);
        assert!(cells.iter().all(|c| c.row < c.col));
        assert_eq!(dm_matrix(&models[..2], DmOptions::default()).unwrap().len(), 1);
        assert!(dm_matrix(&models[..1], DmOptions::default()).is_err());
    }

    #[test]
    fn sweep_over_several_lags() {
        use crate::model_zoo::{Family, ModelSpec};
        use crate::synth::{gen_seasonal_ar_panel, SeasonalArSpec};
        let g = gen_seasonal_ar_panel(&SeasonalArSpec { days: 30, seed: 2, ..Default::default() }).unwrap();
        let ranges = [g.panel];
        let data = MarketData::new(&ranges);
        let splits = blocked_splits(30, 3).unwrap();
        let mut spec = ModelSpec::new(Family::LstmT);
        spec.hyper.hidden = 2;
        spec.train.max_epochs = 1;
        spec.train.patience = 1;
        spec.train.max_train_samples = Some(50);
        spec.train.max_validation_samples = Some(50);
        let c = sensitivity_sweep(&spec, &[2, 3, 4], &data, 0, &splits).unwrap();
        assert_eq!(c.pairs, vec![String::from("SYNUSD")]);
        assert_eq!(c.raw_mse[0].len(), 3);
        assert!(c.normalized[0].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn curve_normalization() {
        assert_eq!(normalize_curve(&[4.0]), (vec![0.0], true));
        let (c, flat) = normalize_curve(&[4.0, 3.0, 2.5, 2.0]);
        assert!(!flat);
        assert_eq!(c[0], 1.0);
        assert_eq!(c[3], 0.0);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
    }
}
