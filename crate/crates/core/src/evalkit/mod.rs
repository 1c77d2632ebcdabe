//! Detection metrics: triggers with a 500 ms wake window, No-Trigger Rate
//! on speech examples, False-Trigger Rate on noise-only examples, latency,
//! threshold sweeps and per-noise breakdowns.
//!
//! Scores and thresholds live in the logit domain, so `z >= t` is the same
//! decision as `sigmoid(z) >= sigmoid(t)` without rounding at the extremes.

pub mod detect;
pub mod report;
pub mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{
    compute_ftr, compute_latency, compute_ntr, detect, detect_all, duty_cycle, quantile, Detection, FtrStats,
    LatencyStats,
};
pub use report::{evaluate, write_breakdown_csv, write_curve_csv, write_latency_csv, EvalReport, NoiseRow, OVERALL};
pub use sweep::{
    best_ftr_within, error_curve, logit, operating_point, sigmoid, CurvePoint, GridConfig, OperatingPoint,
};

pub const FRAME_RATE: f64 = 100.0;
/// Frames the sensor stays awake after a trigger (500 ms).
pub const REFRACTORY_FRAMES: usize = 50;
/// Default operating NTR.
pub const TARGET_NTR: f64 = 0.03;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no speech examples to compute NTR on")]
    NoSpeech,
    #[error("no noise-only audio to compute FTR on")]
    NoNoise,
    #[error("detections do not line up with the examples")]
    Mismatch,
    #[error("invalid threshold grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-frame logits of one test example with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub id: String,
    pub noise: String,
    pub phrase: Option<String>,
    pub scores: Vec<f64>,
    pub duration_s: f64,
    /// First frame containing speech; `None` for noise-only examples.
    pub start_frame: Option<usize>,
}

impl ScoredExample {
    pub fn speech(id: &str, noise: &str, phrase: &str, scores: Vec<f64>, duration_s: f64, start_frame: usize) -> Self {
        ScoredExample {
            id: id.into(),
            noise: noise.into(),
            phrase: Some(phrase.into()),
            scores,
            duration_s,
            start_frame: Some(start_frame),
        }
    }

    pub fn noise(id: &str, noise: &str, scores: Vec<f64>, duration_s: f64) -> Self {
        ScoredExample { id: id.into(), noise: noise.into(), phrase: None, scores, duration_s, start_frame: None }
    }

    pub fn is_speech(&self) -> bool {
        self.start_frame.is_some()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.start_frame.map(|f| f as f64 / FRAME_RATE)
    }
}
