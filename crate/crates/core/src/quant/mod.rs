//! Hard activations, k-bit quantizers, the integer inference engine and the
//! hardware weight container.
//!
//! Rounding is half-away-from-zero everywhere, in the float and the integer
//! paths alike.

pub mod export;
pub mod fixed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{export_weights, footprint, load_weights, ExportPaths, Footprint};
pub use fixed::{FixedMatrix, FixedPointModel};

use crate::models::{ModelError, ModelKind};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("the integer engine needs a level-2 model, got level {0}")]
    NotLevel2(u8),
    #[error("{0} has no integer engine (recurrent models only)")]
    NotRecurrent(ModelKind),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Values within this distance of a half step are rounded as exact ties.
///
/// Every quantity fed to a quantizer at level 2 is a rational with a bounded
/// denominator, so a genuine non-tie sits at least ~1e-9 away from the half
/// step for k <= 6; f64 accumulation error stays below ~1e-11. The tolerance
/// sits between the two, which makes the float path round exactly like the
/// integer engine.
pub const GRID_TIE_TOLERANCE: f64 = 1e-10;

/// `(x + 2) / 4` clipped to `[0, 1]`.
#[inline]
pub fn hard_sigmoid(x: f64) -> f64 {
    if x < -2.0 {
        0.0
    } else if x > 2.0 {
        1.0
    } else {
        (x + 2.0) / 4.0
    }
}

/// `x` clipped to `[-1, 1]`.
#[inline]
pub fn hard_tanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[inline]
pub fn hard_sigmoid_grad(x: f64) -> f64 {
    if x > -2.0 && x < 2.0 {
        0.25
    } else {
        0.0
    }
}

#[inline]
pub fn hard_tanh_grad(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Round half away from zero, treating values within
/// [`GRID_TIE_TOLERANCE`] of a half step as ties.
#[inline]
pub fn round_on_grid(x: f64) -> f64 {
    let mag = (x.abs() + 0.5 + GRID_TIE_TOLERANCE).floor();
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

/// `2^k - 1`: levels of the unsigned sigmoid grid and the θ grid.
#[inline]
pub fn unsigned_levels(bits: u32) -> i64 {
    (1i64 << bits) - 1
}

/// `2^(k-1) - 1`: positive levels of the signed tanh and weight grids.
#[inline]
pub fn signed_levels(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Hard sigmoid quantized onto `{0, 1/(2^k-1), ..., 1}`.
#[inline]
pub fn hard_sigmoid_qtz(x: f64, bits: u32) -> f64 {
    let levels = unsigned_levels(bits) as f64;
    if x < -2.0 {
        0.0
    } else if x > 2.0 {
        1.0
    } else {
        round_on_grid((x + 2.0) / 4.0 * levels) / levels
    }
}

/// Hard tanh quantized onto the signed grid with `2^(k-1)-1` positive steps.
#[inline]
pub fn hard_tanh_qtz(x: f64, bits: u32) -> f64 {
    let levels = signed_levels(bits) as f64;
    if x < -1.0 {
        -1.0
    } else if x > 1.0 {
        1.0
    } else {
        round_on_grid(x * levels) / levels
    }
}

/// Per-matrix quantization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    /// θ expressed on its own grid: `θ = theta_code / (2^k - 1)`.
    pub theta_code: i64,
}

impl QuantSpec {
    pub fn theta(&self) -> f64 {
        self.theta_code as f64 / unsigned_levels(self.bits) as f64
    }

    /// Grid step `θ / (2^(k-1) - 1)`.
    pub fn step(&self) -> f64 {
        self.theta_code as f64 / (unsigned_levels(self.bits) * signed_levels(self.bits)) as f64
    }

    /// Integer code of `w` in `[-(2^(k-1)-1), 2^(k-1)-1]`.
    pub fn code(&self, w: f64) -> i64 {
        if self.theta_code == 0 {
            return 0;
        }
        let s = signed_levels(self.bits);
        let theta = self.theta();
        if w < -theta {
            -s
        } else if w > theta {
            s
        } else {
            (round_half_away(w / theta * s as f64) as i64).clamp(-s, s)
        }
    }

    /// Value of an integer code.
    pub fn value(&self, code: i64) -> f64 {
        (code * self.theta_code) as f64 / (unsigned_levels(self.bits) * signed_levels(self.bits)) as f64
    }

    pub fn quantize(&self, w: f64) -> f64 {
        self.value(self.code(w))
    }

    /// Whether `w` lies inside the clip range, where the straight-through
    /// estimator lets gradients pass.
    pub fn passes_gradient(&self, w: f64) -> bool {
        w.abs() <= self.theta()
    }
}

/// Derives θ from the root-mean-square of the weights: the k-bit unsigned
/// rounding of 3σ.
pub fn theta_spec(weights: &[f64], bits: u32) -> QuantSpec {
    assert!(bits >= 2, "quantization needs at least 2 bits");
    let sigma = if weights.is_empty() {
        0.0
    } else {
        (weights.iter().map(|w| w * w).sum::<f64>() / weights.len() as f64).sqrt()
    };
    let levels = unsigned_levels(bits) as f64;
    QuantSpec { bits, theta_code: round_half_away(3.0 * sigma * levels) as i64 }
}

/// Quantizes a weight matrix (flattened) to k bits.
pub fn quantize_weights(weights: &[f64], bits: u32) -> (Vec<f64>, QuantSpec) {
    let spec = theta_spec(weights, bits);
    (weights.iter().map(|&w| spec.quantize(w)).collect(), spec)
}
