//! Empirical diagnostics over range panels: minute profiles, weekday
//! seasonality, autocorrelations and cross-pair lagged correlation.
//!
//! Autocorrelations use the Box-Jenkins convention: lag products are summed
//! over valid positions only and divided by the same `N * variance` as lag 0,
//! so `|acf| <= 1` always holds. A product is valid when both cells are
//! observed and, for the intraday series, lie on the same day.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{RangePanel, MINUTES_PER_DAY};
use crate::math;

/// Mean log range for each minute of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteProfile {
    /// `None` where no day observed that minute.
    pub means: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

fn profile_over(panel: &RangePanel, days: impl Iterator<Item = usize>) -> MinuteProfile {
    let mut sums = vec![0.0; MINUTES_PER_DAY];
    let mut counts = vec![0usize; MINUTES_PER_DAY];
    for d in days {
        for t in 0..MINUTES_PER_DAY {
            if let Some(v) = panel.get(t, d) {
                sums[t] += v;
                counts[t] += 1;
            }
        }
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();
    MinuteProfile { means, counts }
}

pub fn minute_profile(panel: &RangePanel) -> Result<MinuteProfile> {
    if panel.num_days() == 0 {
        return Err(Error::EmptyData);
    }
    Ok(profile_over(panel, 0..panel.num_days()))
}

/// Minute profiles grouped by weekday (0 = Monday).
pub fn weekday_profiles(panel: &RangePanel) -> Result<BTreeMap<u8, MinuteProfile>> {
    if panel.num_days() == 0 {
        return Err(Error::EmptyData);
    }
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, d) in panel.days.iter().enumerate() {
        groups.entry(d.weekday()).or_default().push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(wd, idx)| (wd, profile_over(panel, idx.into_iter())))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    /// `None` where no valid lag product exists.
    pub values: Vec<Option<f64>>,
}

impl AcfResult {
    pub fn at(&self, lag: usize) -> Option<f64> {
        self.lags.iter().position(|l| *l == lag).and_then(|i| self.values[i])
    }
}

/// ACF of a set of segments: products never span two segments.
fn segmented_acf(segments: &[Vec<Option<f64>>], max_lag: usize) -> Result<AcfResult> {
    let (mut sum, mut n) = (0.0, 0usize);
    for seg in segments {
        for v in seg.iter().flatten() {
            sum += v;
            n += 1;
        }
    }
    if n < 2 {
        return Err(Error::DegenerateSeries);
    }
    let mean = sum / n as f64;
    let ss: f64 = segments
        .iter()
        .flat_map(|s| s.iter().flatten())
        .map(|v| (v - mean) * (v - mean))
        .sum();
    if !(ss > 1e-300) {
        return Err(Error::DegenerateSeries);
    }
    let mut lags = Vec::with_capacity(max_lag + 1);
    let mut values = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for seg in segments {
            if seg.len() <= k {
                continue;
            }
            for i in k..seg.len() {
                if let (Some(a), Some(b)) = (seg[i], seg[i - k]) {
                    acc += (a - mean) * (b - mean);
                    pairs += 1;
                }
            }
        }
        lags.push(k);
        values.push(if pairs > 0 { Some(acc / ss) } else { None });
    }
    Ok(AcfResult { lags, values })
}

/// ACF of the within-day minute series; lag products stay inside one day.
pub fn intraday_acf(panel: &RangePanel, max_lag: usize) -> Result<AcfResult> {
    if max_lag == 0 {
        return Err(Error::InvalidArgument(alloc::string::String::from("max_lag must be >= 1")));
    }
    let segments: Vec<Vec<Option<f64>>> = (0..panel.num_days())
        .map(|d| (0..MINUTES_PER_DAY).map(|t| panel.get(t, d)).collect())
        .collect();
    segmented_acf(&segments, max_lag)
}

/// ACF of the daily series `V[minute][.]`. Lags beyond `len - 2` are undefined.
pub fn interday_acf(panel: &RangePanel, minute: usize, max_lag: usize) -> Result<AcfResult> {
    if minute >= MINUTES_PER_DAY {
        return Err(Error::InvalidArgument(alloc::format!("minute {} out of range", minute)));
    }
    let series: Vec<Option<f64>> = (0..panel.num_days()).map(|d| panel.get(minute, d)).collect();
    let len = series.len();
    let mut acf = segmented_acf(core::slice::from_ref(&series), max_lag)?;
    for (lag, v) in acf.lags.iter().zip(acf.values.iter_mut()) {
        if len < 2 || *lag > len - 2 {
            *v = None;
        }
    }
    Ok(acf)
}

/// Lag-ℓ correlation matrices between pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub pairs: Vec<alloc::string::String>,
    pub lags: Vec<usize>,
    /// `matrices[l][i][j]` is the correlation of pair `i` at `t` with pair `j` at `t - lags[l]`.
    pub matrices: Vec<Vec<Vec<Option<f64>>>>,
}

pub const DEFAULT_CROSS_LAGS: [usize; 5] = [0, 1, 2, 4, 8];

/// Pearson correlation of `V_i[t]` with `V_j[t - lag]` over jointly observed
/// within-day positions. Constant series give `None` in their cells.
pub fn cross_pair_correlation(panels: &[RangePanel], lags: &[usize]) -> Result<CrossCorrelation> {
    if panels.len() < 2 {
        return Err(Error::InvalidArgument(alloc::string::String::from("need at least two panels")));
    }
    if panels.windows(2).any(|w| w[0].days != w[1].days) {
        return Err(Error::InvalidArgument(alloc::string::String::from("panels are not aligned")));
    }
    let p = panels.len();
    let mut matrices = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut m = vec![vec![None; p]; p];
        for i in 0..p {
            for j in 0..p {
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                for d in 0..panels[0].num_days() {
                    for t in lag..MINUTES_PER_DAY {
                        if let (Some(a), Some(b)) = (panels[i].get(t, d), panels[j].get(t - lag, d)) {
                            xs.push(a);
                            ys.push(b);
                        }
                    }
                }
                m[i][j] = math::pearson(&xs, &ys);
            }
        }
        if m.iter().flatten().all(|c| c.is_none()) {
            return Err(Error::DegenerateSeries);
        }
        matrices.push(m);
    }
    Ok(CrossCorrelation { pairs: panels.iter().map(|p| p.pair.clone()).collect(), lags: lags.to_vec(), matrices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::Date;
    use crate::rng::{seeded, standard_normal};

    fn days(n: usize) -> Vec<Date> {
        let start = Date::from_ymd(2018, 1, 1).unwrap();
        (0..n as i64).map(|i| start.add_days(i)).collect()
    }

    fn noise_panel(n_days: usize, seed: u64) -> RangePanel {
        let mut rng = seeded(seed);
        let values = (0..n_days * MINUTES_PER_DAY).map(|_| 5.0 + standard_normal(&mut rng)).collect();
        RangePanel::dense("N", days(n_days), values).unwrap()
    }

    #[test]
    fn profile_averages() {
        let col: Vec<f64> = (0..MINUTES_PER_DAY).map(|t| 0.1 + t as f64 * 1e-3).collect();
        let mut values = col.clone();
        values.extend(col.iter().map(|v| 3.0 * v));
        let panel = RangePanel::dense("P", days(2), values).unwrap();
        let prof = minute_profile(&panel).unwrap();
        for t in 0..MINUTES_PER_DAY {
            assert!((prof.means[t].unwrap() - 2.0 * col[t]).abs() < 1e-12);
            assert_eq!(prof.counts[t], 2);
        }

        let same = RangePanel::dense("P", days(3), [col.clone(), col.clone(), col.clone()].concat()).unwrap();
        let prof = minute_profile(&same).unwrap();
        assert!(prof.means.iter().zip(&col).all(|(m, c)| (m.unwrap() - c).abs() < 1e-12));

        let masked = same.with_cell(9, 0, None).with_cell(9, 1, None).with_cell(9, 2, None);
        let prof = minute_profile(&masked).unwrap();
        assert_eq!(prof.means[9], None);
        assert_eq!(prof.counts[9], 0);
    }

    #[test]
    fn weekday_grouping() {
        let n = 14;
        let values = (0..n * MINUTES_PER_DAY).map(|i| (i / MINUTES_PER_DAY) as f64).collect();
        let panel = RangePanel::dense("P", days(n), values).unwrap();
        let groups = weekday_profiles(&panel).unwrap();
        assert_eq!(groups.len(), 7);
        // Mondays are days 0 and 7.
        assert_eq!(groups[&0].means[0], Some(3.5));
    }

    #[test]
    fn profile_invariant_under_day_reordering() {
        let panel = noise_panel(5, 1);
        let reordered = panel.select_days(&[4, 2, 0, 3, 1]);
        let a = minute_profile(&panel).unwrap();
        let b = minute_profile(&reordered).unwrap();
        for (x, y) in a.means.iter().zip(&b.means) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn acf_of_white_noise_is_small() {
        let panel = noise_panel(20, 3);
        let acf = intraday_acf(&panel, 20).unwrap();
        let band = 3.0 / math::sqrt(panel.observed_count() as f64);
        assert!((acf.at(0).unwrap() - 1.0).abs() < 1e-12);
        for k in 1..=20 {
            assert!(acf.at(k).unwrap().abs() < band, "lag {}", k);
        }
    }

    #[test]
    fn acf_of_ar1_matches_phi() {
        let n_days = 70; // ~100k points
        let mut rng = seeded(11);
        let mut x = 0.0;
        let values = (0..n_days * MINUTES_PER_DAY)
            .map(|_| {
                x = 0.5 * x + standard_normal(&mut rng);
                10.0 + x
            })
            .collect();
        let panel = RangePanel::dense("AR", days(n_days), values).unwrap();
        let acf = intraday_acf(&panel, 3).unwrap();
        assert!((acf.at(1).unwrap() - 0.5).abs() < 0.05);
        assert!((acf.at(2).unwrap() - 0.25).abs() < 0.05);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let panel = RangePanel::dense("C", days(2), vec![1.0; 2 * MINUTES_PER_DAY]).unwrap();
        assert_eq!(intraday_acf(&panel, 5), Err(Error::DegenerateSeries));
        assert_eq!(interday_acf(&panel, 0, 5), Err(Error::DegenerateSeries));
    }

    #[test]
    fn periodic_interday_peak() {
        let n = 200;
        let mut values = Vec::new();
        for d in 0..n {
            let v = if d % 20 == 0 { 3.0 } else { 1.0 };
            values.extend(core::iter::repeat_n(v, MINUTES_PER_DAY));
        }
        let panel = RangePanel::dense("P", days(n), values).unwrap();
        let acf = interday_acf(&panel, 810, 30).unwrap();
        assert_eq!(acf.at(0), Some(1.0));
        let best = (1..=30).max_by(|a, b| acf.at(*a).unwrap().partial_cmp(&acf.at(*b).unwrap()).unwrap()).unwrap();
        assert_eq!(best, 20);
    }

    #[test]
    fn short_series_lags_undefined() {
        let panel = noise_panel(5, 4);
        let acf = interday_acf(&panel, 0, 6).unwrap();
        assert!(acf.at(3).is_some());
        assert_eq!(acf.at(4), None);
        assert_eq!(acf.at(6), None);
    }

    #[test]
    fn cross_correlation_examples() {
        let a = noise_panel(3, 5);
        let m = cross_pair_correlation(&[a.clone(), a.clone()], &DEFAULT_CROSS_LAGS).unwrap();
        assert!((m.matrices[0][0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((m.matrices[0][0][0].unwrap() - 1.0).abs() < 1e-12);

        // b[t] = a[t - 2] within each day.
        let mut values = Vec::new();
        for d in 0..a.num_days() {
            let col = a.day_values(d);
            for t in 0..MINUTES_PER_DAY {
                values.push(if t >= 2 { col[t - 2] } else { 5.0 });
            }
        }
        let b = RangePanel::dense("B", a.days.clone(), values).unwrap();
        let m = cross_pair_correlation(&[b, a.clone()], &DEFAULT_CROSS_LAGS).unwrap();
        let best = (0..5)
            .max_by(|x, y| m.matrices[*x][0][1].unwrap().partial_cmp(&m.matrices[*y][0][1].unwrap()).unwrap())
            .unwrap();
        assert_eq!(m.lags[best], 2);

        let c = noise_panel(3, 6);
        let m = cross_pair_correlation(&[a.clone(), c], &DEFAULT_CROSS_LAGS).unwrap();
        let band = 3.0 / math::sqrt(a.observed_count() as f64);
        for mat in &m.matrices {
            assert!(mat[0][1].unwrap().abs() < band);
            assert!(mat[1][0].unwrap().abs() < band);
        }
        assert_eq!(m.matrices[0][0][1], m.matrices[0][1][0]);
    }

    #[test]
    fn iid_acf_passes_portmanteau_sanity() {
        let mut exceed = 0usize;
        let trials = 50;
        for seed in 0..trials {
            let panel = noise_panel(2, 100 + seed);
            let acf = intraday_acf(&panel, 20).unwrap();
            let root_n = math::sqrt(panel.observed_count() as f64);
            exceed += (1..=20).filter(|k| acf.at(*k).unwrap().abs() * root_n > 1.96).count();
        }
        assert!(exceed as f64 / (20.0 * trials as f64) <= 0.10);
    }
}
