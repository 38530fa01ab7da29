//! Minute bars, the log-range volatility proxy, and the fixed daily grid.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::error::{Error, Result};
use crate::math;

/// Length of the daily grid.
pub const MINUTES_PER_DAY: usize = 1440;

/// One OHLC observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinuteBar {
    pub date: Date,
    /// Minute of day in `0..1440`.
    pub minute: u16,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl MinuteBar {
    /// Builds a bar, checking the OHLC ordering and positivity.
    pub fn new(date: Date, minute: u16, open: f64, high: f64, low: f64, close: f64) -> Result<Self> {
        let bar = MinuteBar { date, minute, open, high, low, close };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.minute as usize >= MINUTES_PER_DAY {
            return Err(Error::RejectedBar(format!("minute {} out of range", self.minute)));
        }
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::RejectedBar(String::from("non-finite price")));
        }
        if self.low <= 0.0 {
            return Err(Error::InvalidPrice(format!("low {} is not positive", self.low)));
        }
        if self.high < self.low {
            return Err(Error::RejectedBar(format!("high {} < low {}", self.high, self.low)));
        }
        if self.open < self.low || self.open > self.high || self.close < self.low || self.close > self.high {
            return Err(Error::RejectedBar(String::from("open/close outside [low, high]")));
        }
        Ok(())
    }
}

/// `ln(high) - ln(low)` of the bar.
pub fn log_range(bar: &MinuteBar) -> Result<f64> {
    if !(bar.low > 0.0) || !(bar.high > 0.0) {
        return Err(Error::InvalidPrice(format!("high {} / low {}", bar.high, bar.low)));
    }
    Ok(math::ln(bar.high) - math::ln(bar.low))
}

/// Something noteworthy that did not abort processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based source line, when the diagnostic refers to an input line.
    pub line: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    RejectedBar,
    DroppedDay,
}

/// Per-pair `T x D` matrix of minutely log ranges with an observation mask.
///
/// Storage is day-major: the 1440 minutes of day `d` are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePanel {
    pub pair: String,
    pub days: Vec<Date>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// Same grid as [`RangePanel`] but holding close-to-close log returns.
///
/// The return at minute `t` is `ln(close_t / close_{t-1})`, taking the most
/// recent earlier observed close, possibly from the previous retained day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub pair: String,
    pub days: Vec<Date>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

macro_rules! grid_accessors {
    ($ty:ident) => {
        impl $ty {
            pub fn num_days(&self) -> usize {
                self.days.len()
            }

            #[inline]
            pub fn get(&self, minute: usize, day: usize) -> Option<f64> {
                let i = day * MINUTES_PER_DAY + minute;
                if self.mask[i] {
                    Some(self.values[i])
                } else {
                    None
                }
            }

            #[inline]
            pub fn is_observed(&self, minute: usize, day: usize) -> bool {
                self.mask[day * MINUTES_PER_DAY + minute]
            }

            /// Raw column for one day; masked cells hold 0 and must be checked via [`Self::day_mask`].
            pub fn day_values(&self, day: usize) -> &[f64] {
                &self.values[day * MINUTES_PER_DAY..(day + 1) * MINUTES_PER_DAY]
            }

            pub fn day_mask(&self, day: usize) -> &[bool] {
                &self.mask[day * MINUTES_PER_DAY..(day + 1) * MINUTES_PER_DAY]
            }

            pub fn observed_count(&self) -> usize {
                self.mask.iter().filter(|m| **m).count()
            }

            /// Keeps only the listed day indices, in the given order.
            pub fn select_days(&self, keep: &[usize]) -> Self {
                let mut values = Vec::with_capacity(keep.len() * MINUTES_PER_DAY);
                let mut mask = Vec::with_capacity(keep.len() * MINUTES_PER_DAY);
                let mut days = Vec::with_capacity(keep.len());
                for &d in keep {
                    days.push(self.days[d]);
                    values.extend_from_slice(self.day_values(d));
                    mask.extend_from_slice(self.day_mask(d));
                }
                $ty { pair: self.pair.clone(), days, values, mask }
            }

            fn check_shape(days: &[Date], values: &[f64], mask: &[bool]) -> Result<()> {
                let n = days.len() * MINUTES_PER_DAY;
                if values.len() != n || mask.len() != n {
                    return Err(Error::Shape(format!(
                        "expected {} cells for {} days, got {} values / {} mask",
                        n,
                        days.len(),
                        values.len(),
                        mask.len()
                    )));
                }
                if days.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument(String::from("days must be strictly increasing")));
                }
                Ok(())
            }
        }
    };
}

grid_accessors!(RangePanel);
grid_accessors!(ReturnPanel);

impl RangePanel {
    /// Builds a panel from day-major values and mask. Masked values are reset to 0.
    pub fn from_parts(pair: impl Into<String>, days: Vec<Date>, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        Self::check_shape(&days, &values, &mask)?;
        for (v, m) in values.iter_mut().zip(&mask) {
            if !*m {
                *v = 0.0;
            } else if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidArgument(format!("log range {} is negative or non-finite", v)));
            }
        }
        Ok(RangePanel { pair: pair.into(), days, values, mask })
    }

    /// Fully observed panel from day-major values.
    pub fn dense(pair: impl Into<String>, days: Vec<Date>, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::from_parts(pair, days, values, mask)
    }

    /// Returns a copy with one cell replaced (or masked when `value` is `None`).
    pub fn with_cell(&self, minute: usize, day: usize, value: Option<f64>) -> Self {
        let mut out = self.clone();
        let i = day * MINUTES_PER_DAY + minute;
        out.values[i] = value.unwrap_or(0.0);
        out.mask[i] = value.is_some();
        out
    }

    /// Returns a copy with every observed value multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        out
    }
}

impl ReturnPanel {
    pub fn from_parts(pair: impl Into<String>, days: Vec<Date>, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        Self::check_shape(&days, &values, &mask)?;
        for (v, m) in values.iter_mut().zip(&mask) {
            if !*m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidArgument(String::from("non-finite return")));
            }
        }
        Ok(ReturnPanel { pair: pair.into(), days, values, mask })
    }

    /// Observed returns of the listed days in chronological order.
    pub fn observed_series(&self, days: core::ops::Range<usize>) -> Vec<f64> {
        let mut out = Vec::new();
        for d in days {
            for t in 0..MINUTES_PER_DAY {
                if let Some(r) = self.get(t, d) {
                    out.push(r);
                }
            }
        }
        out
    }
}

fn check_unique(bars: &[MinuteBar]) -> Result<BTreeMap<(Date, u16), &MinuteBar>> {
    let mut by_key = BTreeMap::new();
    for bar in bars {
        if by_key.insert((bar.date, bar.minute), bar).is_some() {
            return Err(Error::DuplicateTimestamp { date: bar.date, minute: bar.minute });
        }
    }
    Ok(by_key)
}

/// Aligns bars onto the 1440-minute grid, one column per calendar date.
///
/// Days whose observed fraction is below `min_coverage` are dropped and
/// reported as diagnostics. Input order does not matter.
pub fn build_panel(bars: &[MinuteBar], pair: &str, min_coverage: f64) -> Result<(RangePanel, Vec<Diagnostic>)> {
    if !(min_coverage > 0.0 && min_coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!("min_coverage {} not in (0, 1]", min_coverage)));
    }
    if bars.is_empty() {
        return Err(Error::EmptyData);
    }
    let by_key = check_unique(bars)?;

    let mut per_day: BTreeMap<Date, Vec<&MinuteBar>> = BTreeMap::new();
    for (&(date, _), bar) in &by_key {
        per_day.entry(date).or_default().push(bar);
    }

    let mut diagnostics = Vec::new();
    let mut days = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (date, day_bars) in per_day {
        let coverage = day_bars.len() as f64 / MINUTES_PER_DAY as f64;
        if coverage < min_coverage {
            diagnostics.push(Diagnostic {
                line: None,
                kind: DiagnosticKind::DroppedDay,
                message: format!("{} dropped: coverage {:.4} below {}", date, coverage, min_coverage),
            });
            continue;
        }
        let mut col = vec![0.0; MINUTES_PER_DAY];
        let mut col_mask = vec![false; MINUTES_PER_DAY];
        for bar in day_bars {
            col[bar.minute as usize] = log_range(bar)?;
            col_mask[bar.minute as usize] = true;
        }
        days.push(date);
        values.extend(col);
        mask.extend(col_mask);
    }
    if days.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok((RangePanel { pair: String::from(pair), days, values, mask }, diagnostics))
}

/// Close-to-close log returns on the grid of `days` (normally the retained days of a range panel).
pub fn build_return_panel(bars: &[MinuteBar], pair: &str, days: &[Date]) -> Result<ReturnPanel> {
    let by_key = check_unique(bars)?;
    let day_index: BTreeMap<Date, usize> = days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut values = vec![0.0; days.len() * MINUTES_PER_DAY];
    let mut mask = vec![false; days.len() * MINUTES_PER_DAY];
    let mut prev_close: Option<f64> = None;
    for (&(date, minute), bar) in &by_key {
        let Some(&d) = day_index.get(&date) else {
            continue;
        };
        if let Some(prev) = prev_close {
            let i = d * MINUTES_PER_DAY + minute as usize;
            values[i] = math::ln(bar.close) - math::ln(prev);
            mask[i] = true;
        }
        prev_close = Some(bar.close);
    }
    ReturnPanel::from_parts(pair, days.to_vec(), values, mask)
}

/// Restricts every panel to the days common to all of them.
pub fn align_panels(panels: &[RangePanel]) -> Result<Vec<RangePanel>> {
    if panels.len() < 2 {
        return Err(Error::InvalidArgument(String::from("align_panels needs at least two panels")));
    }
    let mut common: BTreeSet<Date> = panels[0].days.iter().copied().collect();
    for p in &panels[1..] {
        let other: BTreeSet<Date> = p.days.iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::NoCommonDays);
    }
    Ok(panels
        .iter()
        .map(|p| {
            let keep: Vec<usize> = p
                .days
                .iter()
                .enumerate()
                .filter(|(_, d)| common.contains(d))
                .map(|(i, _)| i)
                .collect();
            p.select_days(&keep)
        })
        .collect())
}

/// Restricts a return panel to the given days (all of which it must contain).
pub fn restrict_returns(returns: &ReturnPanel, days: &[Date]) -> Result<ReturnPanel> {
    let keep = days
        .iter()
        .map(|d| {
            returns
                .days
                .binary_search(d)
                .map_err(|_| Error::InvalidArgument(format!("return panel lacks day {}", d)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(returns.select_days(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u8, day: u8) -> Date {
        Date::from_ymd(y, m, day).unwrap()
    }

    fn full_day(date: Date, base: f64) -> Vec<MinuteBar> {
        (0..MINUTES_PER_DAY as u16)
            .map(|t| {
                let w = 1e-4 * (1.0 + (t % 7) as f64);
                MinuteBar::new(date, t, base, base * (1.0 + w), base, base).unwrap()
            })
            .collect()
    }

    #[test]
    fn log_range_examples() {
        let bar = MinuteBar::new(d(2018, 1, 1), 1320, 1.20037, 1.20100, 1.20037, 1.20100).unwrap();
        assert!((log_range(&bar).unwrap() - 5.2470e-4).abs() < 1e-8);
        assert!((log_range(&bar).unwrap() - 5.247_004_955_120_926e-4).abs() < 1e-15);

        let flat = MinuteBar { date: d(2018, 1, 1), minute: 0, open: 1.0, high: 1.0, low: 1.0, close: 1.0 };
        assert_eq!(log_range(&flat).unwrap(), 0.0);

        let e = core::f64::consts::E;
        let wide = MinuteBar { date: d(2018, 1, 1), minute: 0, open: 1.0, high: e * 2.0, low: 2.0, close: 2.0 };
        assert!((log_range(&wide).unwrap() - 1.0).abs() < 1e-15);

        let bad = MinuteBar { low: 0.0, ..flat };
        assert!(matches!(log_range(&bad), Err(Error::InvalidPrice(_))));
    }

    #[test]
    fn bar_invariants() {
        assert!(MinuteBar::new(d(2018, 1, 1), 0, 1.0, 0.9, 1.0, 1.0).is_err());
        assert!(matches!(MinuteBar::new(d(2018, 1, 1), 0, 1.0, 1.0, -1.0, 1.0), Err(Error::InvalidPrice(_))));
        assert!(MinuteBar::new(d(2018, 1, 1), 1440, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn full_day_panel() {
        let bars = full_day(d(2018, 1, 2), 1.2);
        let (panel, diags) = build_panel(&bars, "EURUSD", 0.8).unwrap();
        assert_eq!(panel.num_days(), 1);
        assert_eq!(panel.observed_count(), MINUTES_PER_DAY);
        assert!(diags.is_empty());
        for (t, bar) in bars.iter().enumerate() {
            assert_eq!(panel.get(t, 0), Some(log_range(bar).unwrap()));
        }
    }

    #[test]
    fn sparse_day_dropped_and_days_sorted() {
        let mut bars = full_day(d(2018, 1, 5), 1.0);
        bars.extend(full_day(d(2018, 1, 3), 1.0));
        bars.extend(full_day(d(2018, 1, 4), 1.0));
        bars.extend(full_day(d(2018, 1, 6), 1.0).into_iter().take(100));
        let (panel, diags) = build_panel(&bars, "X", 0.8).unwrap();
        assert_eq!(panel.days, [d(2018, 1, 3), d(2018, 1, 4), d(2018, 1, 5)]);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::DroppedDay);
        assert!(diags[0].message.contains("2018-01-06"));

        let only_sparse: Vec<_> = full_day(d(2018, 1, 6), 1.0).into_iter().take(100).collect();
        assert_eq!(build_panel(&only_sparse, "X", 0.8).unwrap_err(), Error::EmptyPanel);
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let mut bars = full_day(d(2018, 1, 3), 1.0);
        bars.push(bars[5]);
        assert_eq!(
            build_panel(&bars, "X", 0.8).unwrap_err(),
            Error::DuplicateTimestamp { date: d(2018, 1, 3), minute: 5 }
        );
    }

    #[test]
    fn missing_minutes_are_masked_not_zero() {
        let mut bars = full_day(d(2018, 1, 3), 1.0);
        bars.remove(10);
        let (panel, _) = build_panel(&bars, "X", 0.8).unwrap();
        assert_eq!(panel.get(10, 0), None);
        assert!(!panel.is_observed(10, 0));
    }

    fn panel_with_days(days: &[Date]) -> RangePanel {
        let values = vec![0.5; days.len() * MINUTES_PER_DAY];
        RangePanel::dense("P", days.to_vec(), values).unwrap()
    }

    #[test]
    fn align_examples() {
        let a = panel_with_days(&[d(2018, 1, 1), d(2018, 1, 2), d(2018, 1, 3)]);
        let b = panel_with_days(&[d(2018, 1, 2), d(2018, 1, 3), d(2018, 1, 4)]);
        let out = align_panels(&[a.clone(), b]).unwrap();
        assert_eq!(out[0].days, [d(2018, 1, 2), d(2018, 1, 3)]);
        assert_eq!(out[1].days, out[0].days);

        let same = align_panels(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same[0], a);

        let c = panel_with_days(&[d(2019, 1, 1)]);
        assert_eq!(align_panels(&[a.clone(), c]).unwrap_err(), Error::NoCommonDays);
        assert!(align_panels(&[a]).is_err());
    }

    #[test]
    fn returns_follow_closes() {
        let date = d(2018, 1, 3);
        let bars: Vec<_> = (0..MINUTES_PER_DAY as u16)
            .map(|t| {
                let c = 1.0 + t as f64 * 1e-5;
                MinuteBar::new(date, t, c, c, c, c).unwrap()
            })
            .collect();
        let r = build_return_panel(&bars, "X", &[date]).unwrap();
        assert_eq!(r.get(0, 0), None);
        let expected = math::ln(1.0 + 1e-5) - math::ln(1.0);
        assert_eq!(r.get(1, 0), Some(expected));
    }

    proptest! {
        #[test]
        fn log_range_scale_invariant(low in 0.01f64..100.0, w in 0.0f64..0.05, k in prop::sample::select(vec![1e-3, 1e3])) {
            let high = low * (1.0 + w);
            let base = MinuteBar { date: d(2018, 1, 1), minute: 0, open: low, high, low, close: low };
            let scaled = MinuteBar { open: low * k, high: high * k, low: low * k, close: low * k, ..base };
            let a = log_range(&base).unwrap();
            let b = log_range(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn build_panel_permutation_invariant(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut bars = full_day(d(2018, 2, 1), 1.1);
            bars.extend(full_day(d(2018, 1, 31), 0.9));
            bars.truncate(bars.len() - 17);
            let (reference, _) = build_panel(&bars, "X", 0.5).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            bars.shuffle(&mut rng);
            let (shuffled, _) = build_panel(&bars, "X", 0.5).unwrap();
            prop_assert_eq!(reference, shuffled);
        }

        #[test]
        fn align_is_idempotent(offset in 0i64..5, len_a in 1usize..6, len_b in 1usize..6) {
            let start = d(2018, 3, 1);
            let a: Vec<Date> = (0..len_a as i64).map(|i| start.add_days(i)).collect();
            let b: Vec<Date> = (0..len_b as i64).map(|i| start.add_days(i + offset)).collect();
            if let Ok(once) = align_panels(&[panel_with_days(&a), panel_with_days(&b)]) {
                let twice = align_panels(&once).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
