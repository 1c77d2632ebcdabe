use serde::{Deserialize, Serialize};

use super::detect::{compute_ftr, compute_ntr, detect_all};
use super::{EvalError, ScoredExample};

/// Threshold grid, uniform in the logit domain between two probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub points: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points: 512, p_min: 1e-4, p_max: 1.0 - 1e-4 }
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.points < 2 || !(0.0 < self.p_min && self.p_min < self.p_max && self.p_max < 1.0) {
            return Err(EvalError::Grid(format!("{self:?}")));
        }
        Ok(())
    }

    /// Ascending logit thresholds.
    pub fn thresholds(&self) -> Result<Vec<f64>, EvalError> {
        self.validate()?;
        let (lo, hi) = (logit(self.p_min), logit(self.p_max));
        let step = (hi - lo) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| if i + 1 == self.points { hi } else { lo + step * i as f64 }).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Logit-domain threshold.
    pub threshold: f64,
    pub probability: f64,
    pub ntr: f64,
    pub ftr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_ntr: f64,
    pub threshold: f64,
    pub ntr: f64,
    pub ftr: f64,
    /// True when no grid threshold reaches the target and the lowest one
    /// was used instead.
    pub unreachable: bool,
}

/// Error curve over ascending thresholds. Scores are computed once by the
/// caller; only the detector runs per threshold.
pub fn error_curve(examples: &[ScoredExample], thresholds: &[f64]) -> Result<Vec<CurvePoint>, EvalError> {
    thresholds
        .iter()
        .map(|&t| {
            let d = detect_all(examples, t);
            Ok(CurvePoint {
                threshold: t,
                probability: sigmoid(t),
                ntr: compute_ntr(examples, &d)?,
                ftr: compute_ftr(examples, &d)?.per_hour,
            })
        })
        .collect()
}

/// Largest threshold whose NTR does not exceed `target`, with no
/// interpolation between grid points.
pub fn operating_point(curve: &[CurvePoint], target: f64) -> Option<OperatingPoint> {
    let first = curve.first()?;
    let best = curve.iter().filter(|p| p.ntr <= target).max_by(|a, b| a.threshold.total_cmp(&b.threshold));
    Some(match best {
        Some(p) => {
            OperatingPoint { target_ntr: target, threshold: p.threshold, ntr: p.ntr, ftr: p.ftr, unreachable: false }
        }
        None => {
            let low = curve.iter().min_by(|a, b| a.threshold.total_cmp(&b.threshold)).unwrap_or(first);
            OperatingPoint {
                target_ntr: target,
                threshold: low.threshold,
                ntr: low.ntr,
                ftr: low.ftr,
                unreachable: true,
            }
        }
    })
}

/// Lowest FTR on the curve among points with NTR at most `max_ntr`.
pub fn best_ftr_within(curve: &[CurvePoint], max_ntr: f64) -> Option<f64> {
    curve.iter().filter(|p| p.ntr <= max_ntr).map(|p| p.ftr).min_by(f64::total_cmp)
}
