//! Model inputs built from range panels: calendar features, lag windows and
//! min-max normalization.
//!
//! Windows never read a cell after the target and never cross midnight on the
//! intraday axis. The interday window is aligned to the target minute: for a
//! target `V[t+1][D]` it holds `V[t+1][D-p_d..D]`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::error::{Error, Result};
use crate::market_data::{RangePanel, MINUTES_PER_DAY};

/// Contiguous range of day indices into a panel.
pub type DaySubset = Range<usize>;

/// Min-max scaling of one series, fitted on training cells only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateScale(min));
        }
        Ok(Normalizer { min, max })
    }

    #[inline]
    pub fn transform(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn inverse_transform(&self, u: f64) -> f64 {
        u * (self.max - self.min) + self.min
    }

    /// Converts a squared error in normalized units to original units.
    #[inline]
    pub fn denormalize_sq_error(&self, e: f64) -> f64 {
        let s = self.max - self.min;
        e * s * s
    }
}

/// Extrema over the observed cells of `days`.
pub fn fit_normalizer(panel: &RangePanel, days: DaySubset) -> Result<Normalizer> {
    if days.is_empty() || days.end > panel.num_days() {
        return Err(Error::InvalidArgument(String::from("day subset empty or out of range")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in days {
        for (v, m) in panel.day_values(d).iter().zip(panel.day_mask(d)) {
            if *m {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
    }
    if !lo.is_finite() {
        return Err(Error::EmptyData);
    }
    Normalizer::new(lo, hi)
}

/// Calendar features of one cell, each scaled into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFeatures {
    pub minute: f64,
    pub day_of_week: f64,
    pub month: f64,
    pub is_month_end: f64,
}

impl TimeFeatures {
    pub fn new(minute: usize, date: Date, is_month_end: bool) -> Self {
        TimeFeatures {
            minute: minute as f64 / (MINUTES_PER_DAY - 1) as f64,
            day_of_week: date.weekday() as f64 / 6.0,
            month: (date.month() - 1) as f64 / 11.0,
            is_month_end: if is_month_end { 1.0 } else { 0.0 },
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.minute, self.day_of_week, self.month, self.is_month_end]
    }
}

/// Flags, per day of the panel, whether it is the last date present for its (year, month).
pub fn month_end_flags(days: &[Date]) -> Vec<bool> {
    let mut last: BTreeMap<(i32, u8), Date> = BTreeMap::new();
    for d in days {
        let e = last.entry((d.year(), d.month())).or_insert(*d);
        if *d > *e {
            *e = *d;
        }
    }
    days.iter().map(|d| last[&(d.year(), d.month())] == *d).collect()
}

/// Grid position of a sample's target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    /// Index into the panel's day list.
    pub day: usize,
    pub minute: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleLayout {
    /// Four calendar features per sample.
    Time,
    /// Intraday `p_t x width` and interday `p_d x width` windows, row-major
    /// with one row per lag step (oldest first) and one column per pair.
    Lags { p_t: usize, p_d: usize, width: usize },
}

impl SampleLayout {
    pub fn input_len(&self) -> usize {
        match *self {
            SampleLayout::Time => 4,
            SampleLayout::Lags { p_t, p_d, width } => (p_t + p_d) * width,
        }
    }
}

/// Borrowed view of one lag sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagWindow<'a> {
    pub intraday: &'a [f64],
    pub interday: &'a [f64],
    pub target: &'a [f64],
    pub width: usize,
}

/// Normalized (input, target) pairs plus the metadata needed to undo the scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub layout: SampleLayout,
    /// Number of target values per sample (1, or p for joint pairs).
    pub out_width: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    keys: Vec<SampleKey>,
    pub normalizers: Vec<Normalizer>,
    pub days: Vec<Date>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.layout.input_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.out_width..(i + 1) * self.out_width]
    }

    pub fn key(&self, i: usize) -> SampleKey {
        self.keys[i]
    }

    pub fn keys(&self) -> &[SampleKey] {
        &self.keys
    }

    pub fn date(&self, i: usize) -> Date {
        self.days[self.keys[i].day]
    }

    /// Lag view of sample `i`; `None` for calendar-feature sets.
    pub fn window(&self, i: usize) -> Option<LagWindow<'_>> {
        match self.layout {
            SampleLayout::Time => None,
            SampleLayout::Lags { p_t, width, .. } => {
                let input = self.input(i);
                let (intraday, interday) = input.split_at(p_t * width);
                Some(LagWindow { intraday, interday, target: self.target(i), width })
            }
        }
    }

    /// Target in original log-range units for output column `j`.
    pub fn raw_target(&self, i: usize, j: usize) -> f64 {
        self.normalizers[j].inverse_transform(self.target(i)[j])
    }

    /// New set holding the listed samples in the given order.
    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut out = SampleSet {
            layout: self.layout,
            out_width: self.out_width,
            inputs: Vec::with_capacity(indices.len() * self.layout.input_len()),
            targets: Vec::with_capacity(indices.len() * self.out_width),
            keys: Vec::with_capacity(indices.len()),
            normalizers: self.normalizers.clone(),
            days: self.days.clone(),
        };
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend_from_slice(self.target(i));
            out.keys.push(self.keys[i]);
        }
        out
    }

    fn empty(layout: SampleLayout, out_width: usize, normalizers: Vec<Normalizer>, days: Vec<Date>) -> Self {
        SampleSet { layout, out_width, inputs: Vec::new(), targets: Vec::new(), keys: Vec::new(), normalizers, days }
    }
}

/// One calendar-feature sample per observed cell of `days`.
pub fn make_time_samples(panel: &RangePanel, norm: &Normalizer, days: DaySubset) -> Result<SampleSet> {
    check_subset(panel, &days)?;
    let month_end = month_end_flags(&panel.days);
    let mut set = SampleSet::empty(SampleLayout::Time, 1, alloc::vec![*norm], panel.days.clone());
    for d in days {
        let date = panel.days[d];
        for t in 0..MINUTES_PER_DAY {
            if let Some(v) = panel.get(t, d) {
                set.inputs.extend_from_slice(&TimeFeatures::new(t, date, month_end[d]).to_array());
                set.targets.push(norm.transform(v));
                set.keys.push(SampleKey { day: d, minute: t as u16 });
            }
        }
    }
    Ok(set)
}

/// Single-pair intraday/interday lag windows for every admissible target in `days`.
pub fn make_lag_samples(panel: &RangePanel, norm: &Normalizer, p_t: usize, p_d: usize, days: DaySubset) -> Result<SampleSet> {
    lag_samples(core::slice::from_ref(panel), core::slice::from_ref(norm), p_t, p_d, days)
}

/// Joint windows over `p >= 2` aligned panels; a target is admissible only if
/// it is admissible for every pair.
pub fn make_pair_samples(panels: &[RangePanel], norms: &[Normalizer], p_t: usize, p_d: usize, days: DaySubset) -> Result<SampleSet> {
    if panels.len() < 2 {
        return Err(Error::InvalidArgument(String::from("pair samples need at least two panels")));
    }
    if panels.windows(2).any(|w| w[0].days != w[1].days) {
        return Err(Error::InvalidArgument(String::from("panels are not aligned")));
    }
    lag_samples(panels, norms, p_t, p_d, days)
}

fn check_subset(panel: &RangePanel, days: &DaySubset) -> Result<()> {
    if days.start > days.end || days.end > panel.num_days() {
        return Err(Error::InvalidArgument(String::from("day subset out of range")));
    }
    Ok(())
}

fn lag_samples(panels: &[RangePanel], norms: &[Normalizer], p_t: usize, p_d: usize, days: DaySubset) -> Result<SampleSet> {
    if p_t == 0 || p_d == 0 || p_t >= MINUTES_PER_DAY {
        return Err(Error::InvalidArgument(String::from("lags must be in 1..1440")));
    }
    if norms.len() != panels.len() {
        return Err(Error::InvalidArgument(String::from("one normalizer per panel required")));
    }
    check_subset(&panels[0], &days)?;
    let width = panels.len();
    let layout = SampleLayout::Lags { p_t, p_d, width };
    let mut set = SampleSet::empty(layout, width, norms.to_vec(), panels[0].days.clone());
    let observed = |t: usize, d: usize| panels.iter().all(|p| p.is_observed(t, d));

    for d in days.start.max(p_d)..days.end {
        // Admissible intraday window ends are tracked with a run length of observed minutes.
        let mut run = 0usize;
        for t in 0..MINUTES_PER_DAY - 1 {
            run = if observed(t, d) { run + 1 } else { 0 };
            if run < p_t {
                continue;
            }
            let target_minute = t + 1;
            if !observed(target_minute, d) {
                continue;
            }
            if !(d - p_d..d).all(|dd| observed(target_minute, dd)) {
                continue;
            }
            for lag in (t + 1 - p_t)..=t {
                for (p, n) in panels.iter().zip(norms) {
                    set.inputs.push(n.transform(p.day_values(d)[lag]));
                }
            }
            for dd in d - p_d..d {
                for (p, n) in panels.iter().zip(norms) {
                    set.inputs.push(n.transform(p.day_values(dd)[target_minute]));
                }
            }
            for (p, n) in panels.iter().zip(norms) {
                set.targets.push(n.transform(p.day_values(d)[target_minute]));
            }
            set.keys.push(SampleKey { day: d, minute: target_minute as u16 });
        }
    }
    if set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(set)
}

impl crate::neural::Dataset for SampleSet {
    fn len(&self) -> usize {
        self.keys.len()
    }

    fn input(&self, i: usize) -> crate::neural::NetInput<'_> {
        match self.layout {
            SampleLayout::Time => crate::neural::NetInput::Features(SampleSet::input(self, i)),
            SampleLayout::Lags { p_t, width, .. } => {
                let (intraday, interday) = SampleSet::input(self, i).split_at(p_t * width);
                crate::neural::NetInput::Windows { intraday, interday }
            }
        }
    }

    fn target(&self, i: usize) -> &[f64] {
        SampleSet::target(self, i)
    }
}
