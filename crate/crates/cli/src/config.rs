use std::path::{Path, PathBuf};

use clap::ValueEnum;
use procattn::explain::{CellIndexing, Thresholds};
use procattn::metrics::F1Average;
use procattn::prestudy::{JsdScope, Pairing};
use procattn::transformer::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Xes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Backward,
    AttentionExploration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub method: Method,
    pub n_mods: usize,
    pub subset_cap: usize,
    pub prune: bool,
    pub cell_indexing: CellIndexing,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            method: Method::Backward,
            n_mods: 20,
            subset_cap: 256,
            prune: true,
            cell_indexing: CellIndexing::NonMasked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub sample_frac: f64,
    pub average: F1Average,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            sample_frac: 1.0,
            average: F1Average::Micro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrestudySettings {
    pub repeats: usize,
    pub pairing: Pairing,
    pub scope: JsdScope,
}

impl Default for PrestudySettings {
    fn default() -> Self {
        PrestudySettings {
            repeats: 5,
            pairing: Pairing::ByIndex,
            scope: JsdScope::AllHeads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub tree: Option<String>,
    pub spec: Option<PathBuf>,
    pub traces: usize,
    pub redo_prob: Option<f64>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            tree: None,
            spec: None,
            traces: 1000,
            redo_prob: None,
        }
    }
}

/// Everything a run depends on. Written next to the outputs of every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub log: Option<PathBuf>,
    pub format: Option<LogFormat>,
    pub case_col: String,
    pub activity_col: String,
    pub time_col: String,
    pub lifecycle_col: Option<String>,
    pub activity_prefix: Option<String>,
    pub lifecycle: Option<String>,
    pub model: Option<PathBuf>,
    pub prefixes: Option<PathBuf>,
    pub heatmap_prefix: Option<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub train_frac: f64,
    pub threads: usize,
    pub transformer: ModelConfig,
    pub thresholds: Thresholds,
    pub explain: ExplainSettings,
    pub evaluate: EvaluateSettings,
    pub prestudy: PrestudySettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            log: None,
            format: None,
            case_col: "case_id".into(),
            activity_col: "activity".into(),
            time_col: "timestamp".into(),
            lifecycle_col: None,
            activity_prefix: None,
            lifecycle: None,
            model: None,
            prefixes: None,
            heatmap_prefix: None,
            out_dir: PathBuf::from("out"),
            seed: 42,
            train_frac: 0.7,
            threads: 1,
            transformer: ModelConfig::default(),
            thresholds: Thresholds::default(),
            explain: ExplainSettings::default(),
            evaluate: EvaluateSettings::default(),
            prestudy: PrestudySettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.transformer.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..1.0).contains(&self.train_frac) || self.train_frac == 0.0 {
            return Err(CliError::Usage(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        if !(self.evaluate.sample_frac > 0.0 && self.evaluate.sample_frac <= 1.0) {
            return Err(CliError::Usage(format!(
                "sample_frac must lie in (0, 1], got {}",
                self.evaluate.sample_frac
            )));
        }
        self.thresholds.validate()?;
        self.model_config().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let mut c = RunConfig {
            log: Some("a.csv".into()),
            ..RunConfig::default()
        };
        c.thresholds.delta_edge = Some(0.4);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c: RunConfig = toml::from_str("seed = 7\n[thresholds]\ndelta_attr = 0.3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.thresholds.delta_attr, 0.3);
        assert_eq!(c.thresholds.delta_sim, 0.2);
        assert_eq!(c.transformer.heads, 4);
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }
}
