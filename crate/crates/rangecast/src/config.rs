//! Run configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rangecast_core::analysis::DEFAULT_CROSS_LAGS;
use rangecast_core::evaluation::DmOptions;
use rangecast_core::model_zoo::{Family, Grid, ModelSpec};
use rangecast_core::synth::{MultiPairSpec, SeasonalArSpec};

use crate::error::{CliError, CliResult};
use crate::formats::{read_text, DataFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSource {
    pub id: String,
    /// Input files, relative to the config file. Empty means `<out>/synth/<id>.csv`.
    #[serde(default)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub folds: usize,
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { folds: 3, train: 0.6, validation: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub max_lag: usize,
    /// Minutes whose interday ACF is reported.
    pub interday_minutes: Vec<usize>,
    pub interday_max_lag: usize,
    pub cross_lags: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { max_lag: 120, interday_minutes: vec![0, 420, 780], interday_max_lag: 10, cross_lags: DEFAULT_CROSS_LAGS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dnn: Grid,
    pub lag: Grid,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dnn: Grid::default_dnn(), lag: Grid::default_lag() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub family: Family,
    pub lags: Vec<usize>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { family: Family::PPairs, lags: vec![5, 10, 20, 30] }
    }
}

/// Synthetic generator used by the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum SynthConfig {
    SeasonalAr(SeasonalArSpec),
    MultiPair(MultiPairSpec),
}

fn default_coverage() -> f64 {
    0.8
}

fn default_start_price() -> f64 {
    1.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub pairs: Vec<PairSource>,
    #[serde(default)]
    pub format: DataFormat,
    /// Added to minute-of-day labels in analysis output only.
    #[serde(default)]
    pub timezone_offset_minutes: i32,
    #[serde(default = "default_coverage")]
    pub min_coverage: f64,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub splits: SplitConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub dm: DmOptions,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default = "default_start_price")]
    pub synth_start_price: f64,
    /// Directory that relative input paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pairs: Vec::new(),
            format: DataFormat::default(),
            timezone_offset_minutes: 0,
            min_coverage: default_coverage(),
            models: Family::ALL.iter().map(|f| ModelSpec::new(*f)).collect(),
            grids: GridConfig::default(),
            splits: SplitConfig::default(),
            seed: 0,
            output_dir: None,
            analysis: AnalysisConfig::default(),
            sensitivity: SensitivityConfig::default(),
            dm: DmOptions::default(),
            synth: None,
            synth_start_price: default_start_price(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = read_text(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            if self.pairs[..i].iter().any(|q| q.id == p.id) {
                return Err(CliError::Usage(format!("pair {} listed twice", p.id)));
            }
        }
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            return Err(CliError::Usage(String::from("min_coverage must lie in (0, 1]")));
        }
        for m in &self.models {
            m.validate().map_err(|e| CliError::Usage(format!("model {}: {}", m.family.tag(), e)))?;
        }
        Ok(())
    }

    /// Model specs with the run seed applied.
    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.train.seed = self.seed;
                m
            })
            .collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// JSON snapshot without machine-specific paths.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_value(&c).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_duplicates() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.splits.folds, 3);
        assert!(cfg.models.is_empty());
        let dup: RunConfig = serde_json::from_str(r#"{"pairs":[{"id":"A"},{"id":"A"}]}"#).unwrap();
        assert!(matches!(dup.validate(), Err(CliError::Usage(_))));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn model_spec_json() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"seed":5,"models":[{"family":"two_lstm","hyper":{"hidden":8},"train":{"max_epochs":3,"patience":2}}]}"#).unwrap();
        cfg.validate().unwrap();
        let specs = cfg.model_specs();
        assert_eq!(specs[0].hyper.hidden, 8);
        assert_eq!(specs[0].hyper.p_t, 20);
        assert_eq!(specs[0].train.seed, 5);
    }
}
