//! Bias-free tanh-RNN, MGU and GRU cells with a dense logistic head, and the
//! MLP / contextual-MLP baselines.

pub mod io;
pub mod network;
pub mod params;

use thiserror::Error;

pub use network::{
    logistic, slots, Activation, HiddenState, MlpTape, Network, ScoreTrack, Slots, StepTape, StreamState,
};
pub use params::{
    matrix_shapes, model_input_dim, EffectiveWeights, Matrix, ModelKind, ModelParams, NamedMatrix, QuantMeta,
    CMLP_OFFSETS, MLP_LAYERS,
};

use crate::afe::FeatureFrame;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("unknown model kind {0:?} (expected tanh, mgu, gru, mlp or cmlp)")]
    UnknownKind(String),
    #[error("model has no matrix named {0}")]
    MissingMatrix(String),
    #[error("{0} is not a recurrent model")]
    NotRecurrent(ModelKind),
    #[error("{0} is not a dense model")]
    NotDense(ModelKind),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A sequence of fixed-width input vectors stored contiguously.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FrameSeq {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FrameSeq {
    pub fn new(dim: usize) -> Self {
        FrameSeq { dim, data: Vec::new() }
    }

    pub fn from_frames(frames: &[FeatureFrame]) -> Self {
        let mut seq = FrameSeq::new(crate::afe::FEATURE_DIM);
        for f in frames {
            seq.data.extend_from_slice(&f.band_energy);
            seq.data.push(f.gain_feature);
        }
        seq
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut seq = FrameSeq::new(dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row width");
            seq.data.extend_from_slice(r);
        }
        seq
    }

    pub fn push(&mut self, frame: &[f64]) {
        assert_eq!(frame.len(), self.dim, "frame width");
        self.data.extend_from_slice(frame);
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Frames `[start, end)` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> FrameSeq {
        FrameSeq { dim: self.dim, data: self.data[start * self.dim..end * self.dim].to_vec() }
    }
}

#[cfg(test)]
mod tests;
