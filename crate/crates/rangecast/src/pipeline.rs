//! Command implementations. Each reads earlier artifacts from the output
//! directory, writes its own under `<out>/<command>/`, and records a manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rangecast_core::analysis::{cross_pair_correlation, interday_acf, intraday_acf, minute_profile, weekday_profiles, MinuteProfile};
use rangecast_core::baselines::tune_ar_order;
use rangecast_core::evaluation::{blocked_splits_with, dm_matrix, score_model, sensitivity_sweep, summarize, ErrorRecord, FoldSplit};
use rangecast_core::market_data::{align_panels, build_panel, build_return_panel, restrict_returns, Diagnostic};
use rangecast_core::model_zoo::{fit, tune_hyperparameters, Family, Grid, GridTable, MarketData, MeanStd, ModelSpec, TrainedModel};
use rangecast_core::synth::{gen_ar_process, gen_garch_returns, gen_iid_noise, gen_multi_pair, gen_seasonal_ar_panel, panel_to_bars, GarchSpec, MultiPairSpec, SeasonalArSpec};
use rangecast_core::{RangePanel, ReturnPanel, MINUTES_PER_DAY};

use crate::config::{RunConfig, SynthConfig};
use crate::error::{CliError, CliResult};
use crate::formats::{decode_text, diagnostics_csv, errors_csv, panel_csv, parse_bars, parse_errors_csv, write_bars_csv, PanelJson};
use crate::io::{verify_inputs, Stage, Workspace};

/// Everything a command needs besides its own flags.
pub struct Context {
    pub cfg: RunConfig,
    pub ws: Workspace,
    /// Restricts commands to these pair ids when nonempty.
    pub pairs: Vec<String>,
    pub jobs: Option<usize>,
}

const JOINT: &str = "joint";

impl Context {
    fn finish(&self, stage: Stage<'_>) -> CliResult<()> {
        stage.finish(self.cfg.snapshot(), self.cfg.seed).map(|_| ())
    }

    fn selected(&self, id: &str) -> bool {
        self.pairs.is_empty() || self.pairs.iter().any(|p| p == id)
    }

    /// Runs jobs on the configured pool; results keep job order.
    fn run_jobs<J: Sync, T: Send>(&self, jobs: &[J], f: impl Fn(&J) -> CliResult<T> + Sync + Send) -> CliResult<Vec<T>> {
        let work = || jobs.par_iter().map(&f).collect::<Vec<_>>();
        let results = match self.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?
                .install(work),
            None => work(),
        };
        results.into_iter().collect()
    }

    fn splits(&self, num_days: usize) -> CliResult<Vec<FoldSplit>> {
        let s = &self.cfg.splits;
        Ok(blocked_splits_with(num_days, s.folds, (s.train, s.validation))?)
    }
}

fn minute_label(minute: usize, offset: i32) -> String {
    let m = (minute as i64 + offset as i64).rem_euclid(MINUTES_PER_DAY as i64);
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_string(rows: Vec<Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}

fn row<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

/// Which synthetic generator the `synth` command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SynthKind {
    SeasonalAr,
    MultiPair,
    GarchReturns,
    IidNoise,
    ArProcess,
}

#[derive(Serialize)]
struct SynthTruth {
    pairs: Vec<String>,
    seasonal: Vec<f64>,
    truncated: usize,
}

pub fn synth(ctx: &Context, kind: Option<SynthKind>, length: usize) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "synth");
    let seed = ctx.cfg.seed;
    let configured = ctx.cfg.synth.clone();
    let kind = kind.unwrap_or(match configured {
        Some(SynthConfig::SeasonalAr(_)) => SynthKind::SeasonalAr,
        _ => SynthKind::MultiPair,
    });
    let write_panels = |st: &mut Stage<'_>, panels: &[RangePanel], seasonal: Vec<f64>, truncated: usize| -> CliResult<()> {
        for (i, p) in panels.iter().enumerate() {
            let bars = panel_to_bars(p, ctx.cfg.synth_start_price, rangecast_core::rng::derive_seed(seed, &[i as u64]))?;
            st.write(&format!("{}.csv", p.pair), write_bars_csv(&bars).as_bytes())?;
        }
        st.write_json("truth.json", &SynthTruth { pairs: panels.iter().map(|p| p.pair.clone()).collect(), seasonal, truncated })
    };
    match kind {
        SynthKind::SeasonalAr => {
            let mut spec = match configured {
                Some(SynthConfig::SeasonalAr(s)) => s,
                _ => SeasonalArSpec::default(),
            };
            spec.seed = seed;
            let g = gen_seasonal_ar_panel(&spec)?;
            write_panels(&mut st, std::slice::from_ref(&g.panel), g.seasonal, g.truncated)?;
        }
        SynthKind::MultiPair => {
            let mut spec = match configured {
                Some(SynthConfig::MultiPair(s)) => s,
                _ => MultiPairSpec::default(),
            };
            spec.factor.seed = seed;
            let g = gen_multi_pair(&spec)?;
            write_panels(&mut st, &g.panels, g.seasonal, g.truncated)?;
        }
        SynthKind::GarchReturns => {
            let (r, v) = gen_garch_returns(&GarchSpec { n: length, seed, ..GarchSpec::default() })?;
            let mut rows = vec![row(["index", "return", "variance"])];
            rows.extend(r.iter().zip(&v).enumerate().map(|(i, (r, v))| vec![i.to_string(), r.to_string(), v.to_string()]));
            st.write("garch_returns.csv", csv_string(rows)?.as_bytes())?;
        }
        SynthKind::IidNoise | SynthKind::ArProcess => {
            let (name, series) = if kind == SynthKind::IidNoise {
                ("iid_noise.csv", gen_iid_noise(length, 0.0, 1.0, seed))
            } else {
                ("ar_process.csv", gen_ar_process(0.0, &[0.5, 0.3], 1.0, &[], length, seed))
            };
            let mut rows = vec![row(["index", "value"])];
            rows.extend(series.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]));
            st.write(name, csv_string(rows)?.as_bytes())?;
        }
    }
    ctx.finish(st)
}

/// Pair ids to ingest: configured pairs, else the synthetic generator's.
fn pair_sources(ctx: &Context) -> CliResult<Vec<(String, Vec<PathBuf>)>> {
    let mut out: Vec<(String, Vec<PathBuf>)> = if !ctx.cfg.pairs.is_empty() {
        ctx.cfg.pairs.iter().map(|p| (p.id.clone(), p.files.iter().map(|f| ctx.cfg.resolve(f)).collect())).collect()
    } else {
        let ids: Vec<String> = match &ctx.cfg.synth {
            Some(SynthConfig::SeasonalAr(s)) => vec![s.pair.clone()],
            Some(SynthConfig::MultiPair(m)) => m.pairs.clone(),
            None => return Err(CliError::Usage(String::from("config lists no pairs and no synthetic generator"))),
        };
        ids.into_iter().map(|id| (id, Vec::new())).collect()
    };
    out.retain(|(id, _)| ctx.selected(id));
    if out.is_empty() {
        return Err(CliError::Usage(String::from("no pairs selected")));
    }
    for (id, files) in &mut out {
        if files.is_empty() {
            files.push(ctx.ws.path(&format!("synth/{}.csv", id)));
        }
        for f in files.iter() {
            if !f.exists() {
                return Err(CliError::Usage(format!("input file {} for pair {} does not exist", f.display(), id)));
            }
        }
    }
    Ok(out)
}

pub fn ingest(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "ingest");
    let mut ranges = Vec::new();
    let mut returns = Vec::new();
    let mut diag_csv = String::new();
    for (id, files) in pair_sources(ctx)? {
        let mut bars = Vec::new();
        let mut diags: Vec<Diagnostic> = Vec::new();
        for f in &files {
            let text = decode_text(&st.read(f)?, f)?;
            let (b, d) = parse_bars(&text, ctx.cfg.format)?;
            bars.extend(b);
            diags.extend(d.into_iter().map(|mut x| {
                x.message = format!("{}: {}", ctx.ws.label(f), x.message);
                x
            }));
        }
        let (panel, dropped) = build_panel(&bars, &id, ctx.cfg.min_coverage)?;
        diags.extend(dropped);
        returns.push(build_return_panel(&bars, &id, &panel.days)?);
        ranges.push(panel);
        let part = diagnostics_csv(&id, &diags)?;
        if diag_csv.is_empty() {
            diag_csv = part;
        } else {
            diag_csv.extend(part.lines().skip(1).map(|l| format!("{}\n", l)));
        }
    }
    if ranges.len() > 1 {
        ranges = align_panels(&ranges)?;
        returns = returns.iter().zip(&ranges).map(|(r, p)| restrict_returns(r, &p.days)).collect::<Result<_, _>>()?;
    }
    for (p, r) in ranges.iter().zip(&returns) {
        st.write_json(&format!("{}.ranges.json", p.pair), &PanelJson::from_ranges(p))?;
        st.write_json(&format!("{}.returns.json", p.pair), &PanelJson::from_returns(r))?;
        st.write(&format!("{}.ranges.csv", p.pair), panel_csv(p)?.as_bytes())?;
    }
    st.write("diagnostics.csv", diag_csv.as_bytes())?;
    st.write_json("pairs.json", &ranges.iter().map(|p| p.pair.clone()).collect::<Vec<_>>())?;
    ctx.finish(st)
}

/// Ingested panels (aligned), filtered by `--pair`.
struct Loaded {
    ranges: Vec<RangePanel>,
    returns: Vec<ReturnPanel>,
}

impl Loaded {
    fn data(&self) -> MarketData<'_> {
        MarketData::with_returns(&self.ranges, &self.returns)
    }
}

fn load(ctx: &Context, st: &mut Stage<'_>) -> CliResult<Loaded> {
    if !ctx.ws.exists("ingest/pairs.json") {
        return Err(CliError::Usage(String::from("no ingested data: run `ingest` first")));
    }
    let ids: Vec<String> = serde_json::from_str(&st.read_rel("ingest/pairs.json")?)?;
    let mut ranges = Vec::new();
    let mut returns = Vec::new();
    for id in ids.iter().filter(|id| ctx.selected(id)) {
        let r: PanelJson = serde_json::from_str(&st.read_rel(&format!("ingest/{}.ranges.json", id))?)?;
        let q: PanelJson = serde_json::from_str(&st.read_rel(&format!("ingest/{}.returns.json", id))?)?;
        ranges.push(r.to_ranges()?);
        returns.push(q.to_returns()?);
    }
    if ranges.is_empty() {
        return Err(CliError::Usage(format!("none of the requested pairs were ingested (have {})", ids.join(", "))));
    }
    Ok(Loaded { ranges, returns })
}

fn profile_rows(p: &MinuteProfile, offset: i32, prefix: &[String]) -> Vec<Vec<String>> {
    (0..MINUTES_PER_DAY)
        .map(|t| {
            let mut r = prefix.to_vec();
            r.extend([t.to_string(), minute_label(t, offset), fmt_opt(p.means[t]), p.counts[t].to_string()]);
            r
        })
        .collect()
}

pub fn profile(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "profile");
    let data = load(ctx, &mut st)?;
    let off = ctx.cfg.timezone_offset_minutes;
    for p in &data.ranges {
        let mut rows = vec![row(["minute", "label", "mean", "count"])];
        rows.extend(profile_rows(&minute_profile(p)?, off, &[]));
        st.write(&format!("{}.minute.csv", p.pair), csv_string(rows)?.as_bytes())?;
        let mut rows = vec![row(["weekday", "minute", "label", "mean", "count"])];
        for (wd, prof) in weekday_profiles(p)? {
            rows.extend(profile_rows(&prof, off, &[wd.to_string()]));
        }
        st.write(&format!("{}.weekday.csv", p.pair), csv_string(rows)?.as_bytes())?;
    }
    ctx.finish(st)
}

pub fn acf(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "acf");
    let data = load(ctx, &mut st)?;
    let a = &ctx.cfg.analysis;
    for p in &data.ranges {
        let intra = intraday_acf(p, a.max_lag)?;
        let mut rows = vec![row(["lag", "acf"])];
        rows.extend(intra.lags.iter().zip(&intra.values).map(|(l, v)| vec![l.to_string(), fmt_opt(*v)]));
        st.write(&format!("{}.intraday.csv", p.pair), csv_string(rows)?.as_bytes())?;
        let mut rows = vec![row(["minute", "label", "lag", "acf"])];
        for &m in &a.interday_minutes {
            if m >= MINUTES_PER_DAY {
                return Err(CliError::Usage(format!("interday minute {} out of range", m)));
            }
            let inter = interday_acf(p, m, a.interday_max_lag)?;
            rows.extend(inter.lags.iter().zip(&inter.values).map(|(l, v)| {
                vec![m.to_string(), minute_label(m, ctx.cfg.timezone_offset_minutes), l.to_string(), fmt_opt(*v)]
            }));
        }
        st.write(&format!("{}.interday.csv", p.pair), csv_string(rows)?.as_bytes())?;
    }
    ctx.finish(st)
}

pub fn crosscorr(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "crosscorr");
    let data = load(ctx, &mut st)?;
    if data.ranges.len() < 2 {
        return Err(CliError::Usage(String::from("cross-pair correlation needs at least two pairs")));
    }
    let cc = cross_pair_correlation(&data.ranges, &ctx.cfg.analysis.cross_lags)?;
    let mut rows = vec![row(["lag", "pair_i", "pair_j", "correlation"])];
    for (li, lag) in cc.lags.iter().enumerate() {
        for (i, a) in cc.pairs.iter().enumerate() {
            for (j, b) in cc.pairs.iter().enumerate() {
                rows.push(vec![lag.to_string(), a.clone(), b.clone(), fmt_opt(cc.matrices[li][i][j])]);
            }
        }
    }
    st.write("crosscorr.csv", csv_string(rows)?.as_bytes())?;
    ctx.finish(st)
}

/// One (model, pair-or-joint) unit of work.
#[derive(Debug, Clone)]
struct Target {
    spec: ModelSpec,
    /// Pair index into the loaded panels (0 for joint models).
    pair: usize,
    key: String,
}

fn targets(ctx: &Context, data: &Loaded) -> CliResult<Vec<Target>> {
    let specs = ctx.cfg.model_specs();
    if specs.is_empty() {
        return Err(CliError::Usage(String::from("config lists no models")));
    }
    let mut out = Vec::new();
    for mut spec in specs {
        if spec.family.is_joint() {
            if data.ranges.len() < 2 {
                return Err(CliError::Usage(String::from("p-Pairs needs at least two pairs")));
            }
            spec.hyper.pairs = data.ranges.len();
            out.push(Target { spec, pair: 0, key: String::from(JOINT) });
        } else {
            for (i, p) in data.ranges.iter().enumerate() {
                out.push(Target { spec: spec.clone(), pair: i, key: p.pair.clone() });
            }
        }
    }
    Ok(out)
}

fn grid_rows(t: &GridTable) -> Vec<Vec<String>> {
    let mut header = vec![format!("{}\\{}", t.row_axis, t.col_axis)];
    header.extend(t.cols.iter().cloned());
    let mut rows = vec![header];
    for (r, cells) in t.rows.iter().zip(&t.cells) {
        let mut line = vec![r.clone()];
        line.extend(cells.iter().map(|c| c.map(|m| fmt_mean_std(&m)).unwrap_or_default()));
        rows.push(line);
    }
    rows
}

pub fn fmt_mean_std(m: &MeanStd) -> String {
    format!("{:.4e}±{:.4e}", m.mean, m.std)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOutput {
    pub model: Family,
    pub key: String,
    pub table: Option<GridTable>,
    /// Validation MSE per AR order and fold.
    pub ar_orders: Option<Vec<(usize, Vec<f64>)>>,
    pub best: ModelSpec,
}

pub fn tune(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "tune");
    let data = load(ctx, &mut st)?;
    let splits = ctx.splits(data.ranges[0].num_days())?;
    let jobs: Vec<Target> = targets(ctx, &data)?.into_iter().filter(|t| t.spec.family != Family::Garch).collect();
    let md = data.data();
    let results = ctx.run_jobs(&jobs, |t| -> CliResult<TuneOutput> {
        match t.spec.family {
            Family::Ar => {
                let mut per_order: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for s in &splits {
                    let r = tune_ar_order(&data.ranges[t.pair], &t.spec.hyper.ar_orders, s.train.clone(), s.validation.clone())?;
                    for (o, m) in &r.validation_mse {
                        per_order.entry(*o).or_default().push(*m);
                    }
                }
                Ok(TuneOutput { model: t.spec.family, key: t.key.clone(), table: None, ar_orders: Some(per_order.into_iter().collect()), best: t.spec.clone() })
            }
            family => {
                let grid: &Grid = if family == Family::PlainDnn { &ctx.cfg.grids.dnn } else { &ctx.cfg.grids.lag };
                let r = tune_hyperparameters(&t.spec, grid, &md, t.pair, &splits)?;
                Ok(TuneOutput { model: family, key: t.key.clone(), table: Some(r.table), ar_orders: None, best: r.best })
            }
        }
    })?;
    for r in &results {
        let base = format!("{}/{}", r.model.slug(), r.key);
        if let Some(t) = &r.table {
            st.write(&format!("{}.grid.csv", base), csv_string(grid_rows(t))?.as_bytes())?;
        }
        if let Some(orders) = &r.ar_orders {
            let mut rows = vec![vec![String::from("order")]];
            rows[0].extend((0..splits.len()).map(|k| format!("fold{}", k)));
            for (o, v) in orders {
                let mut line = vec![o.to_string()];
                line.extend(v.iter().map(|x| x.to_string()));
                rows.push(line);
            }
            st.write(&format!("{}.orders.csv", base), csv_string(rows)?.as_bytes())?;
        }
        st.write_json(&format!("{}.json", base), r)?;
    }
    ctx.finish(st)
}

fn checkpoint_name(t: &Target, fold: usize) -> String {
    format!("{}/{}/fold{}.json", t.spec.family.slug(), t.key, fold)
}

/// Applies the tuned spec when `tune` produced one for this target.
fn tuned_spec(ctx: &Context, st: &mut Stage<'_>, t: &Target) -> CliResult<ModelSpec> {
    let rel = format!("tune/{}/{}.json", t.spec.family.slug(), t.key);
    if !ctx.ws.exists(&rel) || t.spec.family == Family::Ar {
        return Ok(t.spec.clone());
    }
    let out: TuneOutput = serde_json::from_str(&st.read_rel(&rel)?)?;
    let mut spec = t.spec.clone();
    spec.hyper = out.best.hyper;
    Ok(spec)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainRecord {
    model: String,
    key: String,
    fold: usize,
    epochs: usize,
    best_epoch: usize,
    best_validation_loss: Option<f64>,
}

pub fn train(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "train");
    let data = load(ctx, &mut st)?;
    let splits = ctx.splits(data.ranges[0].num_days())?;
    let mut jobs = Vec::new();
    for mut t in targets(ctx, &data)? {
        t.spec = tuned_spec(ctx, &mut st, &t)?;
        for s in &splits {
            jobs.push((t.clone(), s.clone()));
        }
    }
    let md = data.data();
    let models = ctx.run_jobs(&jobs, |(t, s)| Ok(fit(&t.spec, &md, t.pair, s)?))?;
    let mut rows = vec![row(["model", "key", "fold", "epochs", "best_epoch", "best_validation_loss"])];
    for ((t, s), m) in jobs.iter().zip(&models) {
        st.write_json(&checkpoint_name(t, s.index), m)?;
        let rec = match &m.params {
            rangecast_core::model_zoo::FittedParams::Neural { history, .. } => TrainRecord {
                model: t.spec.family.tag().into(),
                key: t.key.clone(),
                fold: s.index,
                epochs: history.epochs.len(),
                best_epoch: history.best_epoch,
                best_validation_loss: Some(history.best_validation_loss),
            },
            _ => TrainRecord { model: t.spec.family.tag().into(), key: t.key.clone(), fold: s.index, epochs: 0, best_epoch: 0, best_validation_loss: None },
        };
        rows.push(vec![rec.model, rec.key, rec.fold.to_string(), rec.epochs.to_string(), rec.best_epoch.to_string(), fmt_opt(rec.best_validation_loss)]);
    }
    st.write("summary.csv", csv_string(rows)?.as_bytes())?;
    ctx.finish(st)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub model: String,
    pub family: Family,
    pub pair: String,
    pub fold_mse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Per-fold error tables, relative to the output root.
    pub error_files: Vec<String>,
}

pub fn evaluate(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "evaluate");
    let data = load(ctx, &mut st)?;
    let splits = ctx.splits(data.ranges[0].num_days())?;
    let mut jobs = Vec::new();
    for t in targets(ctx, &data)? {
        for s in &splits {
            let rel = format!("train/{}", checkpoint_name(&t, s.index));
            if !ctx.ws.exists(&rel) {
                return Err(CliError::Usage(format!("missing checkpoint {}: run `train` first", rel)));
            }
            let model: TrainedModel = serde_json::from_str(&st.read_rel(&rel)?)?;
            jobs.push((t.clone(), s.clone(), model));
        }
    }
    let md = data.data();
    let evals = ctx.run_jobs(&jobs, |(_, s, m)| Ok(score_model(m, &md, s)?))?;
    let mut entries: Vec<MseEntry> = Vec::new();
    for ((t, s, _), ev) in jobs.iter().zip(&evals) {
        for (pair, mse) in &ev.mse {
            let recs: Vec<ErrorRecord> = ev.records.iter().filter(|r| &r.pair == pair).cloned().collect();
            let name = format!("errors/{}/{}.fold{}.csv", t.spec.family.slug(), pair, s.index);
            st.write(&name, errors_csv(&recs)?.as_bytes())?;
            let tag = t.spec.family.tag();
            match entries.iter_mut().find(|e| e.model == tag && &e.pair == pair) {
                Some(e) => {
                    e.fold_mse.push(*mse);
                    e.error_files.push(format!("evaluate/{}", name));
                }
                None => entries.push(MseEntry {
                    model: tag.into(),
                    family: t.spec.family,
                    pair: pair.clone(),
                    fold_mse: vec![*mse],
                    mean: 0.0,
                    std: 0.0,
                    error_files: vec![format!("evaluate/{}", name)],
                }),
            }
        }
    }
    let mut rows = vec![row(["model", "pair", "mean", "std", "cell"])];
    for e in &mut entries {
        let ms = summarize(&e.fold_mse);
        e.mean = ms.mean;
        e.std = ms.std;
        rows.push(vec![e.model.clone(), e.pair.clone(), e.mean.to_string(), e.std.to_string(), fmt_mean_std(&ms)]);
    }
    st.write_json("mse_summary.json", &entries)?;
    st.write("mse_table.csv", csv_string(rows)?.as_bytes())?;
    ctx.finish(st)
}

fn read_summary(ctx: &Context, st: &mut Stage<'_>) -> CliResult<Vec<MseEntry>> {
    if !ctx.ws.exists("evaluate/mse_summary.json") {
        return Err(CliError::Usage(String::from("no evaluation results: run `evaluate` first")));
    }
    Ok(serde_json::from_str(&st.read_rel("evaluate/mse_summary.json")?)?)
}

pub fn dmtest(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "dmtest");
    let entries = read_summary(ctx, &mut st)?;
    let mut models: Vec<(String, Vec<ErrorRecord>)> = Vec::new();
    for e in entries.iter().filter(|e| ctx.selected(&e.pair)) {
        let mut recs = Vec::new();
        for f in &e.error_files {
            recs.extend(parse_errors_csv(&st.read_rel(f)?)?);
        }
        match models.iter_mut().find(|(m, _)| m == &e.model) {
            Some((_, r)) => r.extend(recs),
            None => models.push((e.model.clone(), recs)),
        }
    }
    let cells = dm_matrix(&models, ctx.cfg.dm)?;
    let mut rows = vec![row(["pair", "row", "col", "statistic", "significant", "indeterminate", "n", "mean_differential", "long_run_variance", "error"])];
    for c in &cells {
        let r = c.result;
        rows.push(vec![
            c.pair.clone(),
            c.row.clone(),
            c.col.clone(),
            fmt_opt(r.and_then(|r| r.statistic)),
            r.map(|r| r.significant.to_string()).unwrap_or_default(),
            r.map(|r| r.indeterminate.to_string()).unwrap_or_default(),
            r.map(|r| r.n.to_string()).unwrap_or_default(),
            fmt_opt(r.map(|r| r.mean_differential)),
            fmt_opt(r.map(|r| r.long_run_variance)),
            c.error.clone().unwrap_or_default(),
        ]);
    }
    st.write("dm_matrix.csv", csv_string(rows)?.as_bytes())?;
    st.write_json("dm_matrix.json", &cells)?;
    ctx.finish(st)
}

pub fn sensitivity(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "sensitivity");
    let data = load(ctx, &mut st)?;
    let sc = &ctx.cfg.sensitivity;
    if !sc.family.is_neural() || sc.family == Family::PlainDnn {
        return Err(CliError::Usage(String::from("sensitivity family must be an LSTM family")));
    }
    let splits = ctx.splits(data.ranges[0].num_days())?;
    let mut base = ctx.cfg.model_specs().into_iter().find(|m| m.family == sc.family).unwrap_or_else(|| {
        let mut m = ModelSpec::new(sc.family);
        m.train.seed = ctx.cfg.seed;
        m
    });
    if base.family.is_joint() {
        if data.ranges.len() < 2 {
            return Err(CliError::Usage(String::from("p-Pairs needs at least two pairs")));
        }
        base.hyper.pairs = data.ranges.len();
    }
    let md = data.data();
    let pairs: Vec<usize> = if base.family.is_joint() { vec![0] } else { (0..data.ranges.len()).collect() };
    let curves = ctx.run_jobs(&pairs, |&p| Ok(sensitivity_sweep(&base, &sc.lags, &md, p, &splits)?))?;
    let mut rows = vec![row(["pair", "p", "raw_mse", "normalized", "degenerate"])];
    for c in &curves {
        for (i, pair) in c.pairs.iter().enumerate() {
            for (k, p) in c.lags.iter().enumerate() {
                rows.push(vec![pair.clone(), p.to_string(), c.raw_mse[i][k].to_string(), c.normalized[i][k].to_string(), c.degenerate[i].to_string()]);
            }
        }
    }
    st.write("curve.csv", csv_string(rows)?.as_bytes())?;
    st.write_json("curve.json", &curves)?;
    ctx.finish(st)
}

const STAGES: [&str; 10] = ["synth", "ingest", "profile", "acf", "crosscorr", "tune", "train", "evaluate", "dmtest", "sensitivity"];

#[derive(Serialize)]
struct Report {
    version: String,
    seed: u64,
    pairs: Vec<String>,
    models: Vec<String>,
    mse: Vec<MseEntry>,
    dm: Option<serde_json::Value>,
    tuning: Vec<TuneOutput>,
    sensitivity: Option<serde_json::Value>,
    stages: Vec<String>,
    reference_notes: Vec<&'static str>,
}

const REFERENCE_NOTES: [&str; 3] = [
    "lag length defaults to p_t = p_d = 20; the published lag tuning optimum for LSTM_t is p = 30",
    "published optimal AR orders read 1, 1, 2, 5 in the text and 3, 1, 2, 5 in the DM table headers; AR orders here are tuned per fold",
    "MSE values are in raw log-range units, not normalized units",
];

pub fn report(ctx: &Context) -> CliResult<()> {
    let mut st = Stage::new(&ctx.ws, "report");
    let mut stages = Vec::new();
    for s in STAGES {
        if let Some(m) = ctx.ws.manifest(s)? {
            verify_inputs(&ctx.ws, &m)?;
            for f in &m.outputs {
                let actual = std::fs::read(ctx.ws.path(&f.path)).map(|b| crate::io::sha256_hex(&b)).ok();
                if actual.as_deref() != Some(f.sha256.as_str()) {
                    return Err(CliError::Data(format!("output {} of `{}` was modified after it was written", f.path, s)));
                }
            }
            stages.push(String::from(s));
        }
    }
    let entries = read_summary(ctx, &mut st)?;
    let mut models: Vec<String> = Vec::new();
    let mut pairs: Vec<String> = Vec::new();
    for e in &entries {
        if !models.contains(&e.model) {
            models.push(e.model.clone());
        }
        if !pairs.contains(&e.pair) {
            pairs.push(e.pair.clone());
        }
    }
    let mut header = vec![String::from("model")];
    header.extend(pairs.iter().cloned());
    let mut rows = vec![header];
    for m in &models {
        let mut line = vec![m.clone()];
        for p in &pairs {
            line.push(
                entries
                    .iter()
                    .find(|e| &e.model == m && &e.pair == p)
                    .map(|e| fmt_mean_std(&MeanStd { mean: e.mean, std: e.std }))
                    .unwrap_or_default(),
            );
        }
        rows.push(line);
    }
    st.write("mse_comp.csv", csv_string(rows)?.as_bytes())?;

    let dm = if ctx.ws.exists("dmtest/dm_matrix.csv") {
        let table = st.read_rel("dmtest/dm_matrix.csv")?;
        st.write("dm_test.csv", table.as_bytes())?;
        Some(serde_json::from_str(&st.read_rel("dmtest/dm_matrix.json")?)?)
    } else {
        None
    };

    let mut tuning = Vec::new();
    if let Some(m) = ctx.ws.manifest("tune")? {
        for f in m.outputs.iter().filter(|f| f.path.ends_with(".json") && !f.path.ends_with("manifest.json")) {
            tuning.push(serde_json::from_str::<TuneOutput>(&st.read_rel(&f.path)?)?);
        }
    }
    let mut dnn_rows = Vec::new();
    let mut rnn_rows = vec![vec![String::from("pair"), String::from("model")]];
    for t in &tuning {
        let Some(table) = &t.table else { continue };
        if t.model == Family::PlainDnn {
            let mut g = grid_rows(table);
            g[0].insert(0, String::from("pair"));
            for r in g[1..].iter_mut() {
                r.insert(0, t.key.clone());
            }
            if dnn_rows.is_empty() {
                dnn_rows.push(g[0].clone());
            }
            dnn_rows.extend(g.into_iter().skip(1));
        } else {
            if rnn_rows[0].len() == 2 {
                rnn_rows[0].extend(table.cols.iter().map(|c| format!("p={}", c)));
            }
            let mut line = vec![t.key.clone(), String::from(t.model.tag())];
            line.extend(table.cells[0].iter().map(|c| c.map(|m| fmt_mean_std(&m)).unwrap_or_default()));
            rnn_rows.push(line);
        }
    }
    if !dnn_rows.is_empty() {
        st.write("hp_dnn.csv", csv_string(dnn_rows)?.as_bytes())?;
    }
    if rnn_rows.len() > 1 {
        st.write("hp_rnn.csv", csv_string(rnn_rows)?.as_bytes())?;
    }
    let sensitivity = if ctx.ws.exists("sensitivity/curve.json") { Some(serde_json::from_str(&st.read_rel("sensitivity/curve.json")?)?) } else { None };
    let rep = Report {
        version: String::from(env!("CARGO_PKG_VERSION")),
        seed: ctx.cfg.seed,
        pairs,
        models,
        mse: entries,
        dm,
        tuning,
        sensitivity,
        stages,
        reference_notes: REFERENCE_NOTES.to_vec(),
    };
    st.write_json("report.json", &rep)?;
    ctx.finish(st)
}
