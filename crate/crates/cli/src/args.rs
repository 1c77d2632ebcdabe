//! Command-line surface. Flags override the config file, and the work
//! directory can also come from the environment (flag > env > file).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wus_core::models::ModelKind;
use wus_core::training::LossKind;

use crate::config::{RunConfig, WORK_DIR_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wus", version, about = "Wake-up sensor twin: corpus, training, quantization, evaluation and export")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = WORK_DIR_ENV)]
    pub work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub noise_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub speech_dir: Option<PathBuf>,
    /// Worker threads for per-example work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// tanh, mgu, gru, mlp or cmlp.
    #[arg(long, global = true)]
    pub kind: Option<String>,
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    /// bce or max_pool.
    #[arg(long, global = true)]
    pub loss: Option<String>,
    /// Weight bit width.
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the train/val/test manifests.
    Synth {
        /// Generate synthetic source audio when the source directories are missing.
        #[arg(long)]
        synthetic_sources: bool,
    },
    /// Train one quantization level (0 float, 1 quantization-aware, 2 frozen).
    Train {
        #[arg(long, default_value_t = 0)]
        level: u8,
    },
    /// Same as `train`, defaulting to level 1.
    Quantize {
        #[arg(long, default_value_t = 1)]
        level: u8,
    },
    /// Score a checkpoint on a manifest and write the reports.
    Eval {
        #[arg(long, default_value_t = 0)]
        level: u8,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fine-tune and evaluate the float model at several bit widths.
    Sweep {
        /// Comma-separated widths; the config's list when omitted.
        #[arg(long = "widths", value_delimiter = ',')]
        widths: Vec<u32>,
    },
    /// Write the packed weights of a level-2 checkpoint.
    Export {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

impl Common {
    /// Config file (or defaults) with the flags applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(d) = &self.work_dir {
            cfg.paths.work_dir = d.clone();
        }
        if let Some(d) = &self.noise_dir {
            cfg.paths.noise_dir = d.clone();
        }
        if let Some(d) = &self.speech_dir {
            cfg.paths.speech_dir = d.clone();
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(k) = &self.kind {
            cfg.model.kind = k.parse::<ModelKind>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(h) = self.hidden {
            cfg.model.hidden_dim = h;
        }
        if let Some(l) = &self.loss {
            cfg.train.loss = l.parse::<LossKind>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(b) = self.bits {
            cfg.quant.bits = b;
        }
        if let Some(m) = self.max_epochs {
            cfg.train.max_epochs = m;
        }
        if let Some(p) = self.patience {
            cfg.train.patience = p;
        }
        Ok(cfg)
    }
}
