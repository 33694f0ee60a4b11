//! Experiment configuration: one JSON-serializable struct where every
//! field has a default, unknown keys are rejected, and each run writes its
//! resolved form beside its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auxnet::{EmbeddingSource, MhfaConfig};
use crate::corpus::Condition;
use crate::embopt::{
    default_step_size, EmbOptConfig, EmbOptObjective, StepDirection, DEFAULT_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::models::{AsrConditionSite, ConformerConfig, PvadConditionSite, TseConditionSite};

/// The three downstream tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Tsasr,
    Tse,
    Pvad,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Tsasr => "tsasr",
            Task::Tse => "tse",
            Task::Pvad => "pvad",
        }
    }

    /// Whether a larger dev metric is better (word error rate is the one
    /// metric where smaller wins).
    pub fn metric_improves_upward(self) -> bool {
        !matches!(self, Task::Tsasr)
    }

    /// Name of the dev-selection metric logged for this task.
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Tsasr => "wer",
            Task::Tse => "si_sdri_db",
            Task::Pvad => "map",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsasr" => Ok(Task::Tsasr),
            "tse" => Ok(Task::Tse),
            "pvad" => Ok(Task::Pvad),
            other => Err(Error::config(format!(
                "unknown task '{other}' (expected tsasr, tse, pvad)"
            ))),
        }
    }
}

/// Embedding-refinement settings as configured. The step size is optional
/// here: left unset, it resolves to the per-source default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbOptSettings {
    pub step_size: Option<f64>,
    pub iterations: usize,
    pub objective: EmbOptObjective,
    pub optimizer: StepDirection,
}

impl Default for EmbOptSettings {
    fn default() -> Self {
        EmbOptSettings {
            step_size: None,
            iterations: DEFAULT_ITERATIONS,
            objective: EmbOptObjective::ScoreMax,
            optimizer: StepDirection::AdamDirection,
        }
    }
}

impl EmbOptSettings {
    pub fn resolve(&self, source: EmbeddingSource) -> EmbOptConfig {
        EmbOptConfig {
            step_size: self.step_size.unwrap_or_else(|| default_step_size(source)),
            iterations: self.iterations,
            objective: self.objective,
            optimizer: self.optimizer,
        }
    }
}

fn default_data_dir() -> String {
    "data".to_string()
}

/// Everything one run needs beyond the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub auxnet: EmbeddingSource,
    /// Acoustic condition the model consumes in training and evaluation.
    pub condition: Condition,
    /// Corpus root (as written by dataset generation).
    pub data_dir: String,
    pub train_seed: u64,
    /// Optimization steps to run (one example per step).
    pub n_steps: u64,
    pub peak_rate: f64,
    pub warmup_steps: u64,
    /// Step count at which the linear decay reaches zero.
    pub schedule_total_steps: u64,
    /// Dev evaluation cadence in steps.
    pub dev_every: u64,
    /// Cap on dev examples scored per evaluation.
    pub dev_examples: usize,
    /// Redraw each training example's enrollment utterance from its pool
    /// every epoch.
    pub resample_enrollment: bool,
    pub conformer: ConformerConfig,
    /// Depth of the filter-bank enrollment encoder (1 or 2).
    pub fbank_depth: usize,
    pub mhfa: MhfaConfig,
    pub asr_site: AsrConditionSite,
    pub tse_site: TseConditionSite,
    pub pvad_site: PvadConditionSite,
    pub embopt: EmbOptSettings,
    /// CSV of externally supplied embeddings (required when auxnet is
    /// external): train/eval rows are keyed by decimal speaker id,
    /// verification rows by utterance path.
    pub external_embeddings: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Tsasr,
            auxnet: EmbeddingSource::SpeakerCode,
            condition: Condition::Clean,
            data_dir: default_data_dir(),
            train_seed: 1,
            n_steps: 4000,
            peak_rate: 1e-3,
            warmup_steps: 500,
            schedule_total_steps: 20_000,
            dev_every: 500,
            dev_examples: 50,
            resample_enrollment: true,
            conformer: ConformerConfig::default(),
            fbank_depth: 2,
            mhfa: MhfaConfig::default(),
            asr_site: AsrConditionSite::default(),
            tse_site: TseConditionSite::default(),
            pvad_site: PvadConditionSite::default(),
            embopt: EmbOptSettings::default(),
            external_embeddings: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be positive"));
        }
        if !(self.peak_rate.is_finite() && self.peak_rate > 0.0) {
            return Err(Error::config(format!(
                "peak_rate must be positive and finite, got {}",
                self.peak_rate
            )));
        }
        if self.warmup_steps >= self.schedule_total_steps {
            return Err(Error::config(format!(
                "warmup_steps {} must come before schedule_total_steps {}",
                self.warmup_steps, self.schedule_total_steps
            )));
        }
        if self.dev_every == 0 || self.dev_examples == 0 {
            return Err(Error::config("dev cadence and example cap must be positive"));
        }
        if !(1..=2).contains(&self.fbank_depth) {
            return Err(Error::config(format!(
                "fbank_depth must be 1 or 2, got {}",
                self.fbank_depth
            )));
        }
        if self.auxnet == EmbeddingSource::External && self.external_embeddings.is_none() {
            return Err(Error::config(
                "auxnet=external needs external_embeddings to name the CSV",
            ));
        }
        self.conformer.validate()?;
        if let Some(step) = self.embopt.step_size {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::config(format!(
                    "embopt step_size must be positive and finite, got {step}"
                )));
            }
        }
        Ok(())
    }

    /// Parse a config file, rejecting unknown keys.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Write the fully resolved configuration beside a run's outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("resolved_config.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io_path(&path, e))?;
        Ok(path)
    }

    pub fn data_root(&self) -> PathBuf {
        PathBuf::from(&self.data_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_yields_the_full_default() {
        let parsed: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        parsed.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>("{\"learning_rate\": 0.1}");
        assert!(err.is_err());
    }

    #[test]
    fn nested_overrides_merge_with_defaults() {
        let parsed: ExperimentConfig =
            serde_json::from_str("{\"task\": \"tse\", \"conformer\": {\"n_blocks\": 3}}").unwrap();
        assert_eq!(parsed.task, Task::Tse);
        assert_eq!(parsed.conformer.n_blocks, 3);
        assert_eq!(parsed.conformer.d_model, ExperimentConfig::default().conformer.d_model);
    }

    #[test]
    fn external_auxnet_requires_a_csv_path() {
        let mut config = ExperimentConfig {
            auxnet: EmbeddingSource::External,
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());
        config.external_embeddings = Some("emb.csv".into());
        config.validate().unwrap();
    }

    #[test]
    fn embopt_step_size_resolves_per_source() {
        let settings = EmbOptSettings::default();
        assert_eq!(settings.resolve(EmbeddingSource::Fbank).step_size, 1.0);
        assert_eq!(settings.resolve(EmbeddingSource::Mhfa).step_size, 4.0);
        let pinned = EmbOptSettings { step_size: Some(0.01), ..settings };
        assert_eq!(pinned.resolve(EmbeddingSource::Mhfa).step_size, 0.01);
    }

    #[test]
    fn degenerate_schedules_are_rejected() {
        let config = ExperimentConfig {
            warmup_steps: 100,
            schedule_total_steps: 100,
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig { task: Task::Pvad, ..ExperimentConfig::default() };
        let path = config.write_resolved(dir.path()).unwrap();
        let back = ExperimentConfig::from_json_file(&path).unwrap();
        assert_eq!(back, config);
    }
}
