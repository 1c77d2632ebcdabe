//! Fixed work-directory layout.
//!
//! ```text
//! <work>/manifests/{train,val,test}.csv, summary.json
//! <work>/checkpoints/<tag>-L<level>.wusm (+ .json mirror, .log.csv)
//! <work>/reports/<tag>-L<level>.{json,curve.csv,breakdown.csv,latency.csv}
//! <work>/reports/sweep/...
//! <work>/exports/<tag>-L2.wusw (+ .hex, .footprint.json)
//! ```

use std::path::{Path, PathBuf};

use wus_core::corpus::Partition;
use wus_core::training::LossKind;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkDir {
    pub root: PathBuf,
}

pub fn loss_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Bce => "bce",
        LossKind::MaxPool => "max_pool",
    }
}

/// Model tag used in file names, e.g. `gru16-max_pool` or
/// `mgu16-max_pool-k4` once weights are quantized.
pub fn model_tag(cfg: &RunConfig, level: u8) -> String {
    let base =
        format!("{}{}-{}", cfg.model.kind.name().to_ascii_lowercase(), cfg.model.hidden_dim, loss_name(cfg.train.loss));
    if level == 0 {
        base
    } else {
        format!("{base}-k{}", cfg.quant.bits)
    }
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn exports(&self) -> PathBuf {
        self.root.join("exports")
    }

    pub fn create(&self) -> Result<(), CliError> {
        for d in [self.manifests(), self.checkpoints(), self.reports(), self.exports()] {
            std::fs::create_dir_all(&d).map_err(|e| CliError::Data(format!("{}: {e}", d.display())))?;
        }
        Ok(())
    }

    pub fn manifest(&self, p: Partition) -> PathBuf {
        self.manifests().join(format!("{}.csv", p.name()))
    }

    pub fn checkpoint(&self, cfg: &RunConfig, level: u8) -> PathBuf {
        self.checkpoints().join(format!("{}-L{level}.wusm", model_tag(cfg, level)))
    }

    pub fn train_log(&self, cfg: &RunConfig, level: u8) -> PathBuf {
        self.checkpoints().join(format!("{}-L{level}.log.csv", model_tag(cfg, level)))
    }

    /// Report files share this stem; callers append the suffix.
    pub fn report_stem(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }

    pub fn export(&self, cfg: &RunConfig) -> PathBuf {
        self.exports().join(format!("{}-L2.wusw", model_tag(cfg, 2)))
    }
}

/// `stem` plus a suffix such as `.json`.
pub fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
