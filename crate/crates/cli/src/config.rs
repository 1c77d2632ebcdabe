//! Run configuration: one TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wus_core::afe::{AfeConfig, Compression};
use wus_core::corpus::{PartitionSpec, SourceConfig, StartDetectorConfig};
use wus_core::evalkit::{GridConfig, TARGET_NTR};
use wus_core::models::ModelKind;
use wus_core::training::{default_learning_rate, LossKind, TrainConfig};

use crate::error::CliError;

/// Environment variable that replaces the configured work directory.
pub const WORK_DIR_ENV: &str = "WUS_WORK_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub noise_dir: PathBuf,
    pub speech_dir: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { noise_dir: "data/noise".into(), speech_dir: "data/speech".into(), work_dir: "work".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub afe: AfeConfig,
    /// Frames before the speech start left out of the noise set.
    pub guard_frames: usize,
    pub detector: StartDetectorConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            // log-compressed band energies keep the classifier inputs in a
            // usable range across the 40 dB of level variation
            afe: AfeConfig { compression: Compression::Log { floor: 0.001 }, ..AfeConfig::default() },
            guard_frames: 5,
            detector: StartDetectorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { kind: ModelKind::Gru, hidden_dim: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossKind,
    /// Defaults to 0.002 for recurrent models and 0.005 for dense ones.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epoch cap for the level-1 fine-tuning; `max_epochs` when unset.
    pub finetune_max_epochs: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            loss: t.loss,
            learning_rate: None,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            finetune_max_epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSection {
    pub bits: u32,
    pub input_bits: u32,
}

impl Default for QuantSection {
    fn default() -> Self {
        QuantSection { bits: 4, input_bits: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub grid: GridConfig,
    pub target_ntr: f64,
    /// Bit widths visited by `sweep`.
    pub sweep_bits: Vec<u32>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { grid: GridConfig::default(), target_ntr: TARGET_NTR, sweep_bits: vec![3, 4, 5, 6] }
    }
}

/// Everything a run needs. `seed` has no default: it must come from the
/// file or a flag.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads for per-example work.
    pub jobs: usize,
    pub paths: PathsConfig,
    pub sources: SourceConfig,
    pub corpus: PartitionSpec,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub quant: QuantSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Root seed; every other seed is derived from it.
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("a seed is required (config `seed = ...` or --seed)".into()))
    }

    pub fn jobs(&self) -> usize {
        self.jobs.max(1)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        if self.model.hidden_dim == 0 {
            return Err(CliError::Usage("model.hidden_dim must be positive".into()));
        }
        if !(2..=8).contains(&self.quant.bits) || !(1..=12).contains(&self.quant.input_bits) {
            return Err(CliError::Usage("quant.bits must lie in 2..=8 and quant.input_bits in 1..=12".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.target_ntr) {
            return Err(CliError::Usage("eval.target_ntr must lie in [0, 1]".into()));
        }
        self.eval.grid.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train_config(0, 0).validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    /// Checks that the source directories exist.
    pub fn validate_sources(&self) -> Result<(), CliError> {
        for dir in [&self.paths.noise_dir, &self.paths.speech_dir] {
            if !dir.is_dir() {
                return Err(CliError::Data(format!("source directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self, level: u8, seed: u64) -> TrainConfig {
        let t = &self.train;
        let max_epochs = if level == 1 { t.finetune_max_epochs.unwrap_or(t.max_epochs) } else { t.max_epochs };
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or_else(|| default_learning_rate(self.model.kind)),
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            max_epochs,
            patience: t.patience,
            seed,
            loss: t.loss,
            quant_level: level,
            quant_bits: self.quant.bits,
        }
    }
}
