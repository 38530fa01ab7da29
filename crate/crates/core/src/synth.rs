//! Seeded synthetic generators used as ground truth in tests and the demo pipeline.
//!
//! All randomness comes from ChaCha8 streams derived from the spec's seed, one
//! substream per day (or per series), so output is identical on every platform.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::error::{Error, Result};
use crate::market_data::{MinuteBar, RangePanel, MINUTES_PER_DAY};
use crate::math;
use crate::rng::{derive_seed, seeded, standard_normal};

const T: usize = MINUTES_PER_DAY;

/// Gaussian bump added to the minute profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub minute: usize,
    pub width: f64,
    pub height: f64,
}

/// Deterministic intraday profile: base + smooth daily hump + spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalProfile {
    pub base: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub spikes: Vec<Spike>,
}

impl Default for SeasonalProfile {
    fn default() -> Self {
        SeasonalProfile {
            base: 4e-4,
            amplitude: 3e-4,
            spikes: vec![Spike { minute: 420, width: 20.0, height: 4e-4 }, Spike { minute: 780, width: 20.0, height: 3e-4 }],
        }
    }
}

impl SeasonalProfile {
    pub fn flat(level: f64) -> Self {
        SeasonalProfile { base: level, amplitude: 0.0, spikes: Vec::new() }
    }

    pub fn value(&self, minute: usize) -> f64 {
        let x = minute as f64 / T as f64;
        let hump = 0.5 * (1.0 - libm::cos(2.0 * core::f64::consts::PI * x));
        let spikes: f64 = self
            .spikes
            .iter()
            .map(|s| {
                let z = (minute as f64 - s.minute as f64) / s.width.max(1e-9);
                s.height * math::exp(-0.5 * z * z)
            })
            .sum();
        self.base + self.amplitude * hump + spikes
    }

    pub fn curve(&self) -> Vec<f64> {
        (0..T).map(|t| self.value(t)).collect()
    }
}

fn default_start() -> Date {
    Date::from_ymd(2019, 1, 7).expect("valid date")
}

fn default_burn_in() -> usize {
    5
}

/// Seasonal AR panel: `V = s(t) + X`, with `X[t,D] = phi X[t-1,D] + psi X[t,D-1] + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalArSpec {
    #[serde(default)]
    pub pair: String,
    #[serde(default)]
    pub profile: SeasonalProfile,
    pub phi: f64,
    pub psi: f64,
    pub noise: f64,
    pub days: usize,
    #[serde(default = "default_start")]
    pub start: Date,
    /// Days simulated and discarded before the first emitted day.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SeasonalArSpec {
    fn default() -> Self {
        SeasonalArSpec {
            pair: String::from("SYNUSD"),
            profile: SeasonalProfile::default(),
            phi: 0.5,
            psi: 0.3,
            noise: 1e-4,
            days: 30,
            start: default_start(),
            burn_in: default_burn_in(),
            seed: 0,
        }
    }
}

impl SeasonalArSpec {
    fn check(&self) -> Result<()> {
        if !(self.phi.abs() + self.psi.abs() < 1.0) {
            return Err(Error::Spec(format!("unstable dynamics: |phi| + |psi| = {} >= 1", self.phi.abs() + self.psi.abs())));
        }
        if self.days == 0 || !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Spec(String::from("days must be positive and noise nonnegative")));
        }
        Ok(())
    }
}

/// Consecutive weekdays starting at `start` (rolled forward to Monday if needed).
pub fn weekdays(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if d.weekday() < 5 {
            out.push(d);
        }
        d = d.add_days(1);
    }
    out
}

/// The deviation process `X`, day-major, emitted days only.
fn ar_deviations(spec: &SeasonalArSpec, stream: u64) -> (Vec<f64>, Vec<f64>) {
    let total = spec.burn_in + spec.days;
    let mut prev_day = vec![0.0; T];
    let mut day = vec![0.0; T];
    let mut last = 0.0;
    let mut dev = Vec::with_capacity(spec.days * T);
    let mut eps = Vec::with_capacity(spec.days * T);
    for d in 0..total {
        let mut rng = seeded(derive_seed(spec.seed, &[stream, d as u64]));
        for t in 0..T {
            let e = spec.noise * standard_normal(&mut rng);
            let x = spec.phi * last + spec.psi * prev_day[t] + e;
            day[t] = x;
            last = x;
            if d >= spec.burn_in {
                eps.push(e);
            }
        }
        if d >= spec.burn_in {
            dev.extend_from_slice(&day);
        }
        core::mem::swap(&mut prev_day, &mut day);
    }
    (dev, eps)
}

/// A generated panel and its exact decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalArPanel {
    pub panel: RangePanel,
    /// `s(t)` for t in 0..1440.
    pub seasonal: Vec<f64>,
    /// Deviation `X`, day-major like the panel.
    pub deviation: Vec<f64>,
    /// Innovations, day-major.
    pub innovations: Vec<f64>,
    /// `s(t) + X` before truncation at zero.
    pub latent: Vec<f64>,
    pub truncated: usize,
}

fn truncate(latent: &[f64]) -> (Vec<f64>, usize) {
    let mut n = 0;
    let v = latent
        .iter()
        .map(|&x| {
            if x < 0.0 {
                n += 1;
                0.0
            } else {
                x
            }
        })
        .collect();
    (v, n)
}

pub fn gen_seasonal_ar_panel(spec: &SeasonalArSpec) -> Result<SeasonalArPanel> {
    spec.check()?;
    let seasonal = spec.profile.curve();
    let (deviation, innovations) = ar_deviations(spec, 0);
    let latent: Vec<f64> = deviation.iter().enumerate().map(|(i, x)| seasonal[i % T] + x).collect();
    let (values, truncated) = truncate(&latent);
    let panel = RangePanel::dense(spec.pair.clone(), weekdays(spec.start, spec.days), values)?;
    Ok(SeasonalArPanel { panel, seasonal, deviation, innovations, latent, truncated })
}

/// GARCH(1,1) return simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchSpec {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GarchSpec {
    fn default() -> Self {
        GarchSpec { omega: 1e-6, alpha: 0.05, beta: 0.9, n: 50_000, seed: 0 }
    }
}

/// Returns `r_t = sigma_t z_t` and the variance path `sigma_t^2`, started at the unconditional variance.
pub fn gen_garch_returns(spec: &GarchSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let GarchSpec { omega, alpha, beta, n, seed } = *spec;
    if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0) {
        return Err(Error::Spec(format!("infeasible GARCH parameters ({}, {}, {})", omega, alpha, beta)));
    }
    let mut rng = seeded(derive_seed(seed, &[1]));
    let mut var = omega / (1.0 - alpha - beta);
    let mut returns = Vec::with_capacity(n);
    let mut path = Vec::with_capacity(n);
    for _ in 0..n {
        let r = math::sqrt(var) * standard_normal(&mut rng);
        returns.push(r);
        path.push(var);
        var = omega + alpha * r * r + beta * var;
    }
    Ok((returns, path))
}

/// i.i.d. Gaussian noise with standard deviation `scale`.
pub fn gen_iid_noise(n: usize, mean: f64, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(derive_seed(seed, &[2]));
    (0..n).map(|_| mean + scale * standard_normal(&mut rng)).collect()
}

/// `y_t = c + sum_i a_i y_{t-1-i} + noise`, started from `initial` (zeros when short).
pub fn gen_ar_process(intercept: f64, coefficients: &[f64], noise: f64, initial: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let p = coefficients.len();
    let mut rng = seeded(derive_seed(seed, &[3]));
    let mut y: Vec<f64> = (0..p).map(|i| initial.get(i).copied().unwrap_or(0.0)).collect();
    while y.len() < n + p {
        let t = y.len();
        let mut v = intercept;
        for (i, a) in coefficients.iter().enumerate() {
            v += a * y[t - 1 - i];
        }
        if noise > 0.0 {
            v += noise * standard_normal(&mut rng);
        }
        y.push(v);
    }
    y.split_off(p.min(y.len())).into_iter().take(n).collect()
}

/// Several pairs loading on one shared seasonal-AR deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPairSpec {
    pub pairs: Vec<String>,
    pub loadings: Vec<f64>,
    /// Standard deviation of each pair's i.i.d. idiosyncratic term.
    pub idiosyncratic: f64,
    /// Profile, dynamics, noise, days and seed of the shared factor.
    pub factor: SeasonalArSpec,
}

impl Default for MultiPairSpec {
    fn default() -> Self {
        MultiPairSpec {
            pairs: ["EURUSD", "GBPUSD", "AUDUSD", "NZDUSD"].iter().map(|s| String::from(*s)).collect(),
            loadings: vec![1.0, 0.9, 0.8, 0.7],
            idiosyncratic: 5e-5,
            factor: SeasonalArSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPairPanels {
    pub panels: Vec<RangePanel>,
    pub seasonal: Vec<f64>,
    /// Shared deviation, day-major.
    pub factor: Vec<f64>,
    /// Per-pair pre-truncation values.
    pub latent: Vec<Vec<f64>>,
    pub truncated: usize,
}

/// Pair `i` observes `s(t) + loading_i * X + idiosyncratic * eta_i`.
pub fn gen_multi_pair(spec: &MultiPairSpec) -> Result<MultiPairPanels> {
    spec.factor.check()?;
    if spec.pairs.is_empty() || spec.pairs.len() != spec.loadings.len() {
        return Err(Error::Spec(String::from("need one loading per pair")));
    }
    if !(spec.idiosyncratic >= 0.0) || spec.loadings.iter().any(|a| !a.is_finite()) {
        return Err(Error::Spec(String::from("loadings must be finite and idiosyncratic scale nonnegative")));
    }
    for (i, p) in spec.pairs.iter().enumerate() {
        if spec.pairs[..i].contains(p) {
            return Err(Error::Spec(format!("duplicate pair {}", p)));
        }
    }
    let seasonal = spec.factor.profile.curve();
    let (factor, _) = ar_deviations(&spec.factor, 0);
    let days = weekdays(spec.factor.start, spec.factor.days);
    let mut panels = Vec::with_capacity(spec.pairs.len());
    let mut latents = Vec::with_capacity(spec.pairs.len());
    let mut truncated = 0;
    for (i, (name, &a)) in spec.pairs.iter().zip(&spec.loadings).enumerate() {
        let mut latent = Vec::with_capacity(factor.len());
        for d in 0..spec.factor.days {
            let mut rng = seeded(derive_seed(spec.factor.seed, &[1 + i as u64, d as u64]));
            for t in 0..T {
                let eta = standard_normal(&mut rng);
                latent.push(seasonal[t] + a * factor[d * T + t] + spec.idiosyncratic * eta);
            }
        }
        let (values, n) = truncate(&latent);
        truncated += n;
        panels.push(RangePanel::dense(name.clone(), days.clone(), values)?);
        latents.push(latent);
    }
    Ok(MultiPairPanels { panels, seasonal, factor, latent: latents, truncated })
}

/// Minute bars whose log range reproduces the panel: each bar's close moves by a
/// random fraction of its range and the extremes are split evenly around open/close.
pub fn panel_to_bars(panel: &RangePanel, start_price: f64, seed: u64) -> Result<Vec<MinuteBar>> {
    if !(start_price > 0.0) {
        return Err(Error::Spec(String::from("start price must be positive")));
    }
    let mut bars = Vec::with_capacity(panel.observed_count());
    let mut price = start_price;
    for d in 0..panel.num_days() {
        let mut rng = seeded(derive_seed(seed, &[100, d as u64]));
        for t in 0..T {
            let u: f64 = rng.random_range(-0.8..0.8);
            let Some(v) = panel.get(t, d) else { continue };
            let r = v * u;
            let open = price;
            let close = open * math::exp(r);
            let half = 0.5 * (v - r.abs());
            let high = open.max(close) * math::exp(half);
            let low = open.min(close) * math::exp(-half);
            bars.push(MinuteBar::new(panel.days[d], t as u16, open, high.max(open.max(close)), low.min(open.min(close)), close)?);
            price = close;
        }
    }
    Ok(bars)
}
