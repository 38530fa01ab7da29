//! Text formats: minute-bar files, panel CSV/JSON, per-sample error tables.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use rangecast_core::market_data::{Diagnostic, DiagnosticKind};
use rangecast_core::{Date, Error, MinuteBar, RangePanel, ReturnPanel, MINUTES_PER_DAY};
use rangecast_core::evaluation::ErrorRecord;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DataFormat {
    /// `MM/DD/YYYY,HH:MM,open,high,low,close`
    #[default]
    CanonicalCsv,
    /// `YYYYMMDD HHMMSS;open;high;low;close;volume`
    HistdataAscii,
}

/// Reads a file as UTF-8, inflating it first if it starts with the gzip magic.
pub fn read_text(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_text(&bytes, path)
}

pub fn decode_text(bytes: &[u8], path: &Path) -> CliResult<String> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut s = String::new();
        GzDecoder::new(bytes).read_to_string(&mut s).map_err(|e| CliError::io(path, e))?;
        Ok(s)
    } else {
        String::from_utf8(bytes.to_vec()).map_err(|_| CliError::Data(format!("{}: not UTF-8 text", path.display())))
    }
}

fn parse_hhmm(s: &str) -> Option<u16> {
    let (h, m) = s.trim().split_once(':')?;
    let (h, m): (u16, u16) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some(h * 60 + m)
}

fn parse_hhmmss(s: &str) -> Option<u16> {
    let s = s.trim();
    if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let h: u16 = s[0..2].parse().ok()?;
    let m: u16 = s[2..4].parse().ok()?;
    let sec: u16 = s[4..6].parse().ok()?;
    (h < 24 && m < 60 && sec < 60).then_some(h * 60 + m)
}

fn parse_price(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_record(fields: &[&str], format: DataFormat) -> Result<MinuteBar, String> {
    let (date, minute, prices) = match format {
        DataFormat::CanonicalCsv => {
            if fields.len() != 6 {
                return Err(format!("expected 6 fields, got {}", fields.len()));
            }
            let date = Date::parse_mdy(fields[0].trim()).ok_or_else(|| format!("bad date {:?}", fields[0]))?;
            let minute = parse_hhmm(fields[1]).ok_or_else(|| format!("bad time {:?}", fields[1]))?;
            (date, minute, &fields[2..6])
        }
        DataFormat::HistdataAscii => {
            if fields.len() != 6 && fields.len() != 5 {
                return Err(format!("expected 6 fields, got {}", fields.len()));
            }
            let (d, t) = fields[0].trim().split_once(' ').ok_or_else(|| format!("bad timestamp {:?}", fields[0]))?;
            let date = Date::parse_compact(d).ok_or_else(|| format!("bad date {:?}", d))?;
            let minute = parse_hhmmss(t).ok_or_else(|| format!("bad time {:?}", t))?;
            (date, minute, &fields[1..5])
        }
    };
    let p: Vec<f64> = prices.iter().map(|s| parse_price(s).ok_or_else(|| format!("bad price {:?}", s))).collect::<Result<_, _>>()?;
    MinuteBar::new(date, minute, p[0], p[1], p[2], p[3]).map_err(|e| e.to_string())
}

fn is_header(fields: &[&str]) -> bool {
    fields.first().is_some_and(|f| f.trim().eq_ignore_ascii_case("date"))
}

/// Parses bars in file order; malformed lines become diagnostics.
pub fn parse_bars(text: &str, format: DataFormat) -> CliResult<(Vec<MinuteBar>, Vec<Diagnostic>)> {
    let delimiter = match format {
        DataFormat::CanonicalCsv => b',',
        DataFormat::HistdataAscii => b';',
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut bars = Vec::new();
    let mut diags = Vec::new();
    let mut seen = 0usize;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        seen += 1;
        if seen == 1 && is_header(&fields) {
            continue;
        }
        match parse_record(&fields, format) {
            Ok(bar) => bars.push(bar),
            Err(message) => diags.push(Diagnostic { line, kind: DiagnosticKind::RejectedBar, message }),
        }
    }
    if seen == 0 {
        return Err(CliError::Core(Error::EmptyData));
    }
    Ok((bars, diags))
}

/// Canonical CSV with a header row; prices keep full precision.
pub fn write_bars_csv(bars: &[MinuteBar]) -> String {
    let mut out = String::from("date,time,open,high,low,close\n");
    for b in bars {
        let mut date = String::new();
        let _ = b.date.fmt_mdy(&mut date);
        out.push_str(&format!("{},{:02}:{:02},{},{},{},{}\n", date, b.minute / 60, b.minute % 60, b.open, b.high, b.low, b.close));
    }
    out
}

pub fn diagnostics_csv(pair: &str, diags: &[Diagnostic]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pair", "line", "kind", "message"])?;
    for d in diags {
        let kind = match d.kind {
            DiagnosticKind::RejectedBar => "rejected_bar",
            DiagnosticKind::DroppedDay => "dropped_day",
        };
        w.write_record([pair, &d.line.map(|l| l.to_string()).unwrap_or_default(), kind, &d.message])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}

/// `minute,<date1>,<date2>,...`; masked cells are empty.
pub fn panel_csv(panel: &RangePanel) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::from("minute")];
    header.extend(panel.days.iter().map(|d| d.to_string()));
    w.write_record(&header)?;
    for t in 0..MINUTES_PER_DAY {
        let mut row = vec![t.to_string()];
        row.extend((0..panel.num_days()).map(|d| panel.get(t, d).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Minute-major JSON form of a panel grid: `values[t][d]`, `mask[t][d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelJson {
    pub pair: String,
    pub days: Vec<Date>,
    #[serde(rename = "T")]
    pub minutes: usize,
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
}

macro_rules! to_json {
    ($panel:expr) => {{
        let p = $panel;
        let n = p.num_days();
        PanelJson {
            pair: p.pair.clone(),
            days: p.days.clone(),
            minutes: MINUTES_PER_DAY,
            values: (0..MINUTES_PER_DAY).map(|t| (0..n).map(|d| p.get(t, d).unwrap_or(0.0)).collect()).collect(),
            mask: (0..MINUTES_PER_DAY).map(|t| (0..n).map(|d| p.is_observed(t, d)).collect()).collect(),
        }
    }};
}

impl PanelJson {
    pub fn from_ranges(p: &RangePanel) -> Self {
        to_json!(p)
    }

    pub fn from_returns(p: &ReturnPanel) -> Self {
        to_json!(p)
    }

    fn day_major(&self) -> CliResult<(Vec<f64>, Vec<bool>)> {
        let n = self.days.len();
        if self.minutes != MINUTES_PER_DAY
            || self.values.len() != MINUTES_PER_DAY
            || self.mask.len() != MINUTES_PER_DAY
            || self.values.iter().any(|r| r.len() != n)
            || self.mask.iter().any(|r| r.len() != n)
        {
            return Err(CliError::Data(format!("panel {} has inconsistent shape", self.pair)));
        }
        let mut values = Vec::with_capacity(n * MINUTES_PER_DAY);
        let mut mask = Vec::with_capacity(n * MINUTES_PER_DAY);
        for d in 0..n {
            for t in 0..MINUTES_PER_DAY {
                values.push(self.values[t][d]);
                mask.push(self.mask[t][d]);
            }
        }
        Ok((values, mask))
    }

    pub fn to_ranges(&self) -> CliResult<RangePanel> {
        let (v, m) = self.day_major()?;
        Ok(RangePanel::from_parts(self.pair.clone(), self.days.clone(), v, m)?)
    }

    pub fn to_returns(&self) -> CliResult<ReturnPanel> {
        let (v, m) = self.day_major()?;
        Ok(ReturnPanel::from_parts(self.pair.clone(), self.days.clone(), v, m)?)
    }
}

pub const ERROR_HEADER: [&str; 7] = ["pair", "date", "day", "minute", "target", "prediction", "squared_error"];

pub fn errors_csv(records: &[ErrorRecord]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ERROR_HEADER)?;
    for r in records {
        w.write_record([
            r.pair.clone(),
            r.date.to_string(),
            r.day.to_string(),
            r.minute.to_string(),
            r.target.to_string(),
            r.prediction.to_string(),
            r.squared_error.to_string(),
        ])?;
    }
    finish(w)
}

pub fn parse_errors_csv(text: &str) -> CliResult<Vec<ErrorRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ERROR_HEADER {
        return Err(CliError::Data(String::from("error table has an unexpected header")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let bad = || CliError::Data(format!("malformed error row {:?}", rec));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        out.push(ErrorRecord {
            pair: rec[0].to_string(),
            date: Date::parse_iso(&rec[1]).ok_or_else(bad)?,
            day: rec[2].parse().map_err(|_| bad())?,
            minute: rec[3].parse().map_err(|_| bad())?,
            target: num(4)?,
            prediction: num(5)?,
            squared_error: num(6)?,
        });
    }
    Ok(out)
}
