//! The seven forecaster families behind one fit/forecast interface.
//!
//! | family   | input                                  | graph |
//! |----------|----------------------------------------|-------|
//! | AR       | last `p` minutes of the day            | least squares |
//! | GARCH    | minutely returns                        | GARCH(1,1) + range scale |
//! | PlainDNN | calendar features                       | `L` affine layers, relu hidden, identity output |
//! | LSTM_t   | intraday window                         | LSTM + affine head |
//! | LSTM_D   | interday window                         | LSTM + affine head |
//! | 2-LSTM   | both windows                            | two LSTMs, concat, dense head |
//! | p-Pairs  | both windows for `p` pairs jointly      | as 2-LSTM with `p` inputs and outputs |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::ar::{ar_forecasts, fit_ar_segments, panel_segments, tune_ar_order, ArModel};
use crate::baselines::garch::{fit_garch_model, garch_forecasts, GarchConfig, GarchFit};
use crate::error::{Error, Result};
use crate::evaluation::FoldSplit;
use crate::features::{fit_normalizer, make_lag_samples, make_pair_samples, make_time_samples, Normalizer, SampleKey, SampleSet};
use crate::market_data::{RangePanel, ReturnPanel};
use crate::math;
use crate::neural::{train, Activation, Axis, Branch, DenseLayer, LstmCell, Network, TrainConfig, TrainHistory};
use crate::rng::{derive_seed, label_code, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ar,
    Garch,
    PlainDnn,
    LstmT,
    LstmD,
    TwoLstm,
    PPairs,
}

impl Family {
    pub const ALL: [Family; 7] =
        [Family::Ar, Family::Garch, Family::PlainDnn, Family::LstmT, Family::LstmD, Family::TwoLstm, Family::PPairs];

    /// Display name used in tables.
    pub fn tag(self) -> &'static str {
        match self {
            Family::Ar => "AR",
            Family::Garch => "GARCH",
            Family::PlainDnn => "PlainDNN",
            Family::LstmT => "LSTM_t",
            Family::LstmD => "LSTM_D",
            Family::TwoLstm => "2-LSTM",
            Family::PPairs => "p-Pairs-2-LSTM",
        }
    }

    /// Stable snake-case identifier used in paths.
    pub fn slug(self) -> &'static str {
        match self {
            Family::Ar => "ar",
            Family::Garch => "garch",
            Family::PlainDnn => "plain_dnn",
            Family::LstmT => "lstm_t",
            Family::LstmD => "lstm_d",
            Family::TwoLstm => "two_lstm",
            Family::PPairs => "p_pairs",
        }
    }

    pub fn from_slug(s: &str) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.slug() == s)
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, Family::Ar | Family::Garch)
    }

    /// True for families that forecast all pairs jointly.
    pub fn is_joint(self) -> bool {
        self == Family::PPairs
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Affine layers of the plain DNN (hidden layers + output).
    pub dnn_layers: usize,
    pub dnn_width: usize,
    /// LSTM hidden size for every branch.
    pub hidden: usize,
    pub p_t: usize,
    pub p_d: usize,
    /// Affine layers of the head after the concatenated branches.
    pub head_layers: usize,
    pub head_width: usize,
    /// Number of jointly modelled pairs for p-Pairs.
    pub pairs: usize,
    /// Candidate AR orders; a single entry skips tuning.
    pub ar_orders: Vec<usize>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            dnn_layers: 6,
            dnn_width: 30,
            hidden: 64,
            p_t: 20,
            p_d: 20,
            head_layers: 2,
            head_width: 32,
            pairs: 4,
            ar_orders: (1..=10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub garch: GarchConfig,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec { family, hyper: Hyperparameters::default(), train: TrainConfig::default(), garch: GarchConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let positive = |name: &str, v: usize| if v == 0 { Err(Error::Spec(format!("{} must be positive", name))) } else { Ok(()) };
        match self.family {
            Family::Ar => {
                if h.ar_orders.is_empty() || h.ar_orders.contains(&0) {
                    return Err(Error::Spec(String::from("AR orders must be a nonempty list of positive integers")));
                }
            }
            Family::Garch => {}
            Family::PlainDnn => {
                positive("dnn_layers", h.dnn_layers)?;
                positive("dnn_width", h.dnn_width)?;
            }
            Family::LstmT | Family::LstmD => {
                positive("hidden", h.hidden)?;
                positive("p_t", h.p_t)?;
                positive("p_d", h.p_d)?;
            }
            Family::TwoLstm | Family::PPairs => {
                positive("hidden", h.hidden)?;
                positive("p_t", h.p_t)?;
                positive("p_d", h.p_d)?;
                positive("head_layers", h.head_layers)?;
                positive("head_width", h.head_width)?;
                if self.family == Family::PPairs && h.pairs < 2 {
                    return Err(Error::Spec(format!("p-Pairs needs p >= 2, got {}", h.pairs)));
                }
            }
        }
        if self.family.is_neural() {
            self.train.validate()?;
        }
        Ok(())
    }

    /// Lags actually used for sample assembly; single-axis models need only one step on the other axis.
    pub fn sample_lags(&self) -> (usize, usize) {
        match self.family {
            Family::LstmT => (self.hyper.p_t, 1),
            Family::LstmD => (1, self.hyper.p_d),
            _ => (self.hyper.p_t, self.hyper.p_d),
        }
    }
}

fn mlp<R: Rng + ?Sized>(rng: &mut R, input: usize, layers: usize, width: usize, output: usize) -> Vec<DenseLayer> {
    let mut out = Vec::with_capacity(layers);
    let mut fan_in = input;
    for _ in 0..layers.saturating_sub(1) {
        out.push(DenseLayer::init(rng, fan_in, width, Activation::Relu));
        fan_in = width;
    }
    out.push(DenseLayer::init(rng, fan_in, output, Activation::Identity));
    out
}

fn expect_family(spec: &ModelSpec, families: &[Family]) -> Result<()> {
    if families.contains(&spec.family) {
        spec.validate()
    } else {
        Err(Error::Spec(format!("builder does not handle {}", spec.family.tag())))
    }
}

/// Calendar features (4) to one normalized log range.
pub fn build_plain_dnn(spec: &ModelSpec, seed: u64) -> Result<Network> {
    expect_family(spec, &[Family::PlainDnn])?;
    let mut rng = seeded(seed);
    Network::new(Vec::new(), mlp(&mut rng, 4, spec.hyper.dnn_layers, spec.hyper.dnn_width, 1))
}

/// Single LSTM over one lag axis followed by an affine output.
pub fn build_plain_lstm(spec: &ModelSpec, axis: Axis, seed: u64) -> Result<Network> {
    expect_family(spec, &[Family::LstmT, Family::LstmD])?;
    let mut rng = seeded(seed);
    let h = spec.hyper.hidden;
    let cell = LstmCell::init(&mut rng, 1, h);
    Network::new(vec![Branch { axis, cell }], vec![DenseLayer::init(&mut rng, h, 1, Activation::Identity)])
}

fn two_branch(spec: &ModelSpec, width: usize, seed: u64) -> Result<Network> {
    let mut rng = seeded(seed);
    let h = spec.hyper.hidden;
    let intraday = LstmCell::init(&mut rng, width, h);
    let interday = LstmCell::init(&mut rng, width, h);
    let head = mlp(&mut rng, 2 * h, spec.hyper.head_layers, spec.hyper.head_width, width);
    Network::new(vec![Branch { axis: Axis::Intraday, cell: intraday }, Branch { axis: Axis::Interday, cell: interday }], head)
}

/// Independent intraday and interday LSTMs whose final states feed a dense head.
pub fn build_two_lstm(spec: &ModelSpec, seed: u64) -> Result<Network> {
    expect_family(spec, &[Family::TwoLstm])?;
    two_branch(spec, 1, seed)
}

/// 2-LSTM over `p`-wide windows forecasting all `p` pairs.
pub fn build_p_pairs(spec: &ModelSpec, seed: u64) -> Result<Network> {
    expect_family(spec, &[Family::PPairs])?;
    two_branch(spec, spec.hyper.pairs, seed)
}

pub fn build_network(spec: &ModelSpec, seed: u64) -> Result<Network> {
    match spec.family {
        Family::PlainDnn => build_plain_dnn(spec, seed),
        Family::LstmT => build_plain_lstm(spec, Axis::Intraday, seed),
        Family::LstmD => build_plain_lstm(spec, Axis::Interday, seed),
        Family::TwoLstm => build_two_lstm(spec, seed),
        Family::PPairs => build_p_pairs(spec, seed),
        other => Err(Error::Spec(format!("{} is not a neural family", other.tag()))),
    }
}

/// Range panels (aligned, one per pair) plus optional return panels on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct MarketData<'a> {
    pub ranges: &'a [RangePanel],
    pub returns: Option<&'a [ReturnPanel]>,
}

impl<'a> MarketData<'a> {
    pub fn new(ranges: &'a [RangePanel]) -> Self {
        MarketData { ranges, returns: None }
    }

    pub fn with_returns(ranges: &'a [RangePanel], returns: &'a [ReturnPanel]) -> Self {
        MarketData { ranges, returns: Some(returns) }
    }

    pub fn num_days(&self) -> usize {
        self.ranges.first().map(|p| p.num_days()).unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::EmptyData);
        }
        if self.ranges.windows(2).any(|w| w[0].days != w[1].days) {
            return Err(Error::InvalidArgument(String::from("range panels are not aligned")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Ar { model: ArModel, validation_mse: Vec<(usize, f64)> },
    Garch { fit: GarchFit, initial_variance: f64 },
    Neural { network: Network, history: TrainHistory },
}

/// A fitted forecaster with everything needed to predict in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    /// Pair indices (into the data's panels) of the model's outputs.
    pub pair_indices: Vec<usize>,
    pub pairs: Vec<String>,
    pub fold: usize,
    pub normalizers: Vec<Normalizer>,
    pub params: FittedParams,
}

/// One forecast in original log-range units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairForecast {
    /// Index into the data's panels.
    pub pair: usize,
    pub key: SampleKey,
    pub target: f64,
    pub prediction: f64,
}

/// Seed of a (spec, fold, pair) training job.
pub fn job_seed(spec: &ModelSpec, fold: usize, pair: &str) -> u64 {
    derive_seed(spec.train.seed, &[spec.family.code(), fold as u64, label_code(pair)])
}

fn pair_selection(spec: &ModelSpec, data: &MarketData<'_>, pair: usize) -> Result<Vec<usize>> {
    if spec.family.is_joint() {
        if data.ranges.len() != spec.hyper.pairs {
            return Err(Error::Spec(format!("p-Pairs configured for {} pairs, data has {}", spec.hyper.pairs, data.ranges.len())));
        }
        Ok((0..data.ranges.len()).collect())
    } else {
        if pair >= data.ranges.len() {
            return Err(Error::InvalidArgument(format!("pair index {} out of range", pair)));
        }
        Ok(vec![pair])
    }
}

/// Assembles the normalized samples a neural model sees for `days`.
pub fn neural_samples(spec: &ModelSpec, data: &MarketData<'_>, pair_indices: &[usize], normalizers: &[Normalizer], days: Range<usize>) -> Result<SampleSet> {
    let (p_t, p_d) = spec.sample_lags();
    match spec.family {
        Family::PlainDnn => make_time_samples(&data.ranges[pair_indices[0]], &normalizers[0], days),
        Family::LstmT | Family::LstmD | Family::TwoLstm => make_lag_samples(&data.ranges[pair_indices[0]], &normalizers[0], p_t, p_d, days),
        Family::PPairs => {
            let panels: Vec<RangePanel> = pair_indices.iter().map(|&i| data.ranges[i].clone()).collect();
            make_pair_samples(&panels, normalizers, p_t, p_d, days)
        }
        other => Err(Error::Spec(format!("{} has no neural samples", other.tag()))),
    }
}

/// Fits `spec` on the split's training days; validation days drive early
/// stopping (neural) or order selection (AR). Test days are never read.
pub fn fit(spec: &ModelSpec, data: &MarketData<'_>, pair: usize, split: &FoldSplit) -> Result<TrainedModel> {
    spec.validate()?;
    data.check()?;
    let pair_indices = pair_selection(spec, data, pair)?;
    let pairs: Vec<String> = pair_indices.iter().map(|&i| data.ranges[i].pair.clone()).collect();
    let seed = job_seed(spec, split.index, &pairs.join("+"));
    let (normalizers, params) = match spec.family {
        Family::Ar => {
            let panel = &data.ranges[pair];
            let order = if spec.hyper.ar_orders.len() == 1 {
                (spec.hyper.ar_orders[0], Vec::new())
            } else {
                let t = tune_ar_order(panel, &spec.hyper.ar_orders, split.train.clone(), split.validation.clone())?;
                (t.order, t.validation_mse)
            };
            let model = fit_ar_segments(&panel_segments(panel, split.train.clone()), order.0)?;
            (Vec::new(), FittedParams::Ar { model, validation_mse: order.1 })
        }
        Family::Garch => {
            let returns = data
                .returns
                .ok_or_else(|| Error::InvalidArgument(String::from("GARCH needs return panels")))?;
            let (fit, initial_variance) = fit_garch_model(&returns[pair], &data.ranges[pair], split.train.clone(), &spec.garch)?;
            (Vec::new(), FittedParams::Garch { fit, initial_variance })
        }
        _ => {
            let normalizers = pair_indices
                .iter()
                .map(|&i| fit_normalizer(&data.ranges[i], split.train.clone()))
                .collect::<Result<Vec<_>>>()?;
            let train_set = neural_samples(spec, data, &pair_indices, &normalizers, split.train.clone())?;
            let val_set = neural_samples(spec, data, &pair_indices, &normalizers, split.validation.clone())?;
            let net = build_network(spec, derive_seed(seed, &[0]))?;
            let cfg = TrainConfig { seed: derive_seed(seed, &[1]), ..spec.train };
            let (network, history) = train(net, &train_set, &val_set, &cfg)?;
            (normalizers, FittedParams::Neural { network, history })
        }
    };
    Ok(TrainedModel { spec: spec.clone(), pair_indices, pairs, fold: split.index, normalizers, params })
}

impl TrainedModel {
    /// Forecasts for every admissible cell of `days`, in original units.
    pub fn forecast(&self, data: &MarketData<'_>, days: Range<usize>) -> Result<Vec<PairForecast>> {
        data.check()?;
        for (idx, name) in self.pair_indices.iter().zip(&self.pairs) {
            if data.ranges.get(*idx).map(|p| &p.pair) != Some(name) {
                return Err(Error::InvalidArgument(format!("data does not hold pair {} at index {}", name, idx)));
            }
        }
        match &self.params {
            FittedParams::Ar { model, .. } => {
                let pair = self.pair_indices[0];
                Ok(ar_forecasts(model, &data.ranges[pair], days)
                    .into_iter()
                    .map(|f| PairForecast { pair, key: f.key, target: f.target, prediction: f.prediction })
                    .collect())
            }
            FittedParams::Garch { fit, initial_variance } => {
                let pair = self.pair_indices[0];
                let returns = data
                    .returns
                    .ok_or_else(|| Error::InvalidArgument(String::from("GARCH needs return panels")))?;
                Ok(garch_forecasts(&fit.model, *initial_variance, &returns[pair], &data.ranges[pair], days)
                    .into_iter()
                    .map(|f| PairForecast { pair, key: f.key, target: f.target, prediction: f.prediction })
                    .collect())
            }
            FittedParams::Neural { network, .. } => {
                let samples = match neural_samples(&self.spec, data, &self.pair_indices, &self.normalizers, days) {
                    Ok(s) => s,
                    Err(Error::EmptySampleSet) => return Ok(Vec::new()),
                    Err(e) => return Err(e),
                };
                let mut out = Vec::with_capacity(samples.len() * self.pair_indices.len());
                for i in 0..samples.len() {
                    let pred = network.forward(crate::neural::Dataset::input(&samples, i))?;
                    for (j, &pair) in self.pair_indices.iter().enumerate() {
                        out.push(PairForecast {
                            pair,
                            key: samples.key(i),
                            target: samples.raw_target(i, j),
                            prediction: self.normalizers[j].inverse_transform(pred[j]),
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match &self.params {
            FittedParams::Neural { network, .. } => Some(network),
            _ => None,
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        MeanStd { mean: math::mean(values), std: math::sample_std(values) }
    }
}

/// Hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    /// Plain DNN depth x width.
    DnnShape { layers: Vec<usize>, widths: Vec<usize> },
    /// Shared lag `p = p_t = p_d` for the LSTM families.
    Lag { lags: Vec<usize> },
}

impl Grid {
    pub fn default_dnn() -> Grid {
        Grid::DnnShape { layers: vec![2, 4, 6, 8, 10], widths: vec![5, 10, 20, 30] }
    }

    pub fn default_lag() -> Grid {
        Grid::Lag { lags: vec![5, 10, 20, 30] }
    }
}

/// Validation MSE per grid cell, `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub row_axis: String,
    pub col_axis: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<MeanStd>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best: ModelSpec,
    pub best_mse: MeanStd,
    pub table: GridTable,
}

fn validation_mse(model: &TrainedModel, data: &MarketData<'_>, days: Range<usize>) -> Result<f64> {
    let f = model.forecast(data, days)?;
    if f.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(f.iter().map(|x| (x.prediction - x.target) * (x.prediction - x.target)).sum::<f64>() / f.len() as f64)
}

/// Grid search on mean validation MSE across folds (original units). Ties go
/// to the earlier (smaller) cell.
pub fn tune_hyperparameters(base: &ModelSpec, grid: &Grid, data: &MarketData<'_>, pair: usize, splits: &[FoldSplit]) -> Result<TuningResult> {
    let (row_axis, col_axis, rows, cols, specs): (&str, &str, Vec<String>, Vec<String>, Vec<Vec<ModelSpec>>) = match grid {
        Grid::DnnShape { layers, widths } => {
            if base.family != Family::PlainDnn {
                return Err(Error::Spec(String::from("depth x width grid applies to PlainDNN only")));
            }
            let specs = layers
                .iter()
                .map(|&l| {
                    widths
                        .iter()
                        .map(|&n| {
                            let mut s = base.clone();
                            s.hyper.dnn_layers = l;
                            s.hyper.dnn_width = n;
                            s
                        })
                        .collect()
                })
                .collect();
            ("L", "n", layers.iter().map(|l| l.to_string()).collect(), widths.iter().map(|n| n.to_string()).collect(), specs)
        }
        Grid::Lag { lags } => {
            if !base.family.is_neural() || base.family == Family::PlainDnn {
                return Err(Error::Spec(String::from("lag grid applies to LSTM families only")));
            }
            let row = lags
                .iter()
                .map(|&p| {
                    let mut s = base.clone();
                    s.hyper.p_t = p;
                    s.hyper.p_d = p;
                    s
                })
                .collect();
            ("model", "p", vec![String::from(base.family.tag())], lags.iter().map(|p| p.to_string()).collect(), vec![row])
        }
    };
    if splits.is_empty() || specs.iter().all(|r| r.is_empty()) {
        return Err(Error::TuningFailed);
    }
    let mut cells = Vec::with_capacity(specs.len());
    let mut best: Option<(MeanStd, ModelSpec)> = None;
    for row in &specs {
        let mut out_row = Vec::with_capacity(row.len());
        for spec in row {
            let mses: Vec<f64> = splits
                .iter()
                .filter_map(|split| fit(spec, data, pair, split).and_then(|m| validation_mse(&m, data, split.validation.clone())).ok())
                .collect();
            let cell = if mses.is_empty() { None } else { Some(MeanStd::of(&mses)) };
            if let Some(ms) = cell {
                if best.as_ref().is_none_or(|(b, _)| ms.mean < b.mean) {
                    best = Some((ms, spec.clone()));
                }
            }
            out_row.push(cell);
        }
        cells.push(out_row);
    }
    let (best_mse, best) = best.ok_or(Error::TuningFailed)?;
    Ok(TuningResult {
        best,
        best_mse,
        table: GridTable { row_axis: String::from(row_axis), col_axis: String::from(col_axis), rows, cols, cells },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{NetInput, Tensor};

    fn spec(family: Family) -> ModelSpec {
        ModelSpec::new(family)
    }

    #[test]
    fn plain_dnn_parameter_counts() {
        let net = build_plain_dnn(&spec(Family::PlainDnn), 1).unwrap();
        assert_eq!(net.num_params(), 3901);
        assert_eq!(net.head.len(), 6);
        let mut s = spec(Family::PlainDnn);
        s.hyper.dnn_layers = 2;
        let net = build_plain_dnn(&s, 1).unwrap();
        assert_eq!(net.head.len(), 2);
        assert_eq!(net.head[0].activation, Activation::Relu);
        assert_eq!(net.head[1].activation, Activation::Identity);
        s.hyper.dnn_width = 0;
        assert!(matches!(build_plain_dnn(&s, 1), Err(Error::Spec(_))));
    }

    #[test]
    fn plain_lstm_wiring_and_size() {
        let net = build_plain_lstm(&spec(Family::LstmT), Axis::Intraday, 2).unwrap();
        assert_eq!(net.branches[0].cell.num_params(), 16_896);
        assert_eq!(net.head[0].num_params(), 65);
        let y = [0.1; 20];
        let z1 = [0.3; 20];
        let z2 = [0.9; 20];
        let a = net.forward(NetInput::Windows { intraday: &y, interday: &z1 }).unwrap();
        let b = net.forward(NetInput::Windows { intraday: &y, interday: &z2 }).unwrap();
        assert_eq!(a, b);

        let mut s = spec(Family::LstmD);
        s.hyper.p_d = 1;
        let net = build_plain_lstm(&s, Axis::Interday, 2).unwrap();
        let out = net.forward(NetInput::Windows { intraday: &[0.5], interday: &[0.2] }).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn two_lstm_head_size_and_base_case() {
        let net = build_two_lstm(&spec(Family::TwoLstm), 3).unwrap();
        let head: usize = net.head.iter().map(|l| l.num_params()).sum();
        assert_eq!(head, 4161);
        assert_eq!(net.branches[0].axis, Axis::Intraday);
        assert_eq!(net.branches[1].axis, Axis::Interday);
        assert_ne!(net.branches[0].cell, net.branches[1].cell);
        let out = net.forward(NetInput::Windows { intraday: &[0.1], interday: &[0.2] }).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn two_lstm_with_zeroed_interday_columns() {
        let mut s = spec(Family::TwoLstm);
        s.hyper.hidden = 4;
        s.hyper.head_layers = 1;
        let mut two = build_two_lstm(&s, 4).unwrap();
        let mut single_spec = spec(Family::LstmT);
        single_spec.hyper.hidden = 4;
        let single = build_plain_lstm(&single_spec, Axis::Intraday, 5).unwrap();
        two.branches[0].cell = single.branches[0].cell.clone();
        let w = single.head[0].weights.data();
        let mut merged = vec![0.0; 8];
        merged[..4].copy_from_slice(w);
        two.head[0].weights = Tensor::new(&[1, 8], merged).unwrap();
        two.head[0].bias = single.head[0].bias.clone();
        let y = [0.2, 0.4, 0.1, 0.7];
        for z in [[0.0; 3], [0.5, 0.9, 0.1]] {
            let a = two.forward(NetInput::Windows { intraday: &y, interday: &z }).unwrap();
            let b = single.forward(NetInput::Windows { intraday: &y, interday: &z }).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn p_pairs_shapes_and_coupling() {
        let net = build_p_pairs(&spec(Family::PPairs), 6).unwrap();
        let y: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let z: Vec<f64> = (0..80).map(|i| (i as f64 * 0.11).cos().abs()).collect();
        let out = net.forward(NetInput::Windows { intraday: &y, interday: &z }).unwrap();
        assert_eq!(out.len(), 4);

        let mut s = spec(Family::PPairs);
        s.hyper.pairs = 2;
        s.hyper.hidden = 3;
        let net = build_p_pairs(&s, 7).unwrap();
        let y = [0.1, 0.5, 0.2, 0.4];
        let mut y2 = y;
        y2[1] = 0.9;
        let a = net.forward(NetInput::Windows { intraday: &y, interday: &[0.3, 0.3] }).unwrap();
        let b = net.forward(NetInput::Windows { intraday: &y2, interday: &[0.3, 0.3] }).unwrap();
        assert_ne!(a[0], b[0]);

        s.hyper.pairs = 1;
        assert!(matches!(build_p_pairs(&s, 1), Err(Error::Spec(_))));
    }

    #[test]
    fn p_pairs_permutation_equivariance_with_symmetric_weights() {
        let mut s = spec(Family::PPairs);
        s.hyper.pairs = 2;
        s.hyper.hidden = 2;
        s.hyper.head_layers = 1;
        let mut net = build_p_pairs(&s, 8).unwrap();
        let sym = |a: f64, b: f64| Tensor::new(&[2, 2], vec![a, b, b, a]).unwrap();
        for (bi, branch) in net.branches.iter_mut().enumerate() {
            for k in 0..4 {
                let base = 0.1 * (k as f64 + 1.0) + 0.05 * bi as f64;
                branch.cell.input_weights[k] = sym(base, -0.3 * base);
                branch.cell.recurrent_weights[k] = sym(0.2 - base, 0.1);
                branch.cell.biases[k] = Tensor::new(&[2], vec![0.05 * k as f64; 2]).unwrap();
            }
        }
        let (w1, w2, w3, w4) = (0.7, -0.2, 0.4, 0.9);
        net.head[0].weights = Tensor::new(&[2, 4], vec![w1, w2, w3, w4, w2, w1, w4, w3]).unwrap();
        net.head[0].bias = Tensor::new(&[2], vec![0.1, 0.1]).unwrap();

        let y = [0.1, 0.8, 0.3, 0.2, 0.6, 0.5];
        let z = [0.4, 0.9, 0.7, 0.1];
        let swap = |v: &[f64]| v.chunks(2).flat_map(|r| [r[1], r[0]]).collect::<Vec<_>>();
        let a = net.forward(NetInput::Windows { intraday: &y, interday: &z }).unwrap();
        let b = net.forward(NetInput::Windows { intraday: &swap(&y), interday: &swap(&z) }).unwrap();
        assert!((a[0] - b[1]).abs() < 1e-15 && (a[1] - b[0]).abs() < 1e-15);

        // duplicated pair: outputs coincide
        let dup_y = [0.1, 0.1, 0.3, 0.3, 0.6, 0.6];
        let dup_z = [0.4, 0.4, 0.7, 0.7];
        let c = net.forward(NetInput::Windows { intraday: &dup_y, interday: &dup_z }).unwrap();
        assert!((c[0] - c[1]).abs() < 1e-15);
    }

    #[test]
    fn output_shapes_across_grids() {
        for l in [2, 4, 6, 8, 10] {
            for n in [5, 10, 20, 30] {
                let mut s = spec(Family::PlainDnn);
                s.hyper.dnn_layers = l;
                s.hyper.dnn_width = n;
                let net = build_plain_dnn(&s, 1).unwrap();
                assert_eq!(net.forward(NetInput::Features(&[0.1, 0.2, 0.3, 0.0])).unwrap().len(), 1);
            }
        }
        for family in [Family::LstmT, Family::LstmD, Family::TwoLstm, Family::PPairs] {
            for p in [5, 10] {
                let mut s = spec(family);
                s.hyper.hidden = 3;
                s.hyper.p_t = p;
                s.hyper.p_d = p;
                let net = build_network(&s, 2).unwrap();
                let w = if family == Family::PPairs { 4 } else { 1 };
                let y = vec![0.2; p * w];
                let out = net.forward(NetInput::Windows { intraday: &y, interday: &y }).unwrap();
                assert_eq!(out.len(), w);
            }
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(Family::Ar);
        s.hyper.ar_orders = vec![];
        assert!(s.validate().is_err());
        let mut s = spec(Family::TwoLstm);
        s.train.patience = 1000;
        assert!(s.validate().is_err());
        assert_eq!(Family::from_slug("two_lstm"), Some(Family::TwoLstm));
    }
}
