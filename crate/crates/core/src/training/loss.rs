//! Frame-set losses.
//!
//! The public probability-domain functions follow the textbook forms. The
//! trainer works on logits, where `-log(1 - sigmoid(z)) = softplus(z)` and
//! `-log(sigmoid(z)) = softplus(-z)` stay finite for saturated scores.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::models::{logistic, FrameSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    MaxPool,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bce" => Ok(LossKind::Bce),
            "max_pool" | "maxpool" => Ok(LossKind::MaxPool),
            other => Err(format!("unknown loss {other:?} (expected bce or max_pool)")),
        }
    }
}

/// Feature frames with their noise (`T_n`) and speech (`T_s`) frame sets.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub frames: FrameSeq,
    pub noise: Vec<usize>,
    pub speech: Vec<usize>,
}

impl LabeledSequence {
    /// Labels a clip. For speech, `T_s` runs from the start frame to the
    /// end and `T_n` stops `guard_frames` before the start.
    pub fn new(frames: FrameSeq, speech_start: Option<usize>, guard_frames: usize) -> Result<Self, TrainError> {
        let len = frames.len();
        let (noise, speech) = match speech_start {
            None => ((0..len).collect(), Vec::new()),
            Some(start) => {
                if start >= len {
                    return Err(TrainError::Label(format!("speech start frame {start} outside {len} frames")));
                }
                ((0..start.saturating_sub(guard_frames)).collect(), (start..len).collect())
            }
        };
        Ok(LabeledSequence { frames, noise, speech })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let len = self.frames.len();
        if self.noise.iter().chain(&self.speech).any(|&t| t >= len) {
            return Err(TrainError::Label("frame index outside the sequence".into()));
        }
        if self.noise.iter().any(|t| self.speech.contains(t)) {
            return Err(TrainError::Label("noise and speech frame sets overlap".into()));
        }
        Ok(())
    }

    /// Frame sets shifted to a score track starting at `first`, dropping
    /// frames without a score.
    pub fn scored_sets(&self, first: usize) -> (Vec<usize>, Vec<usize>) {
        let shift = |v: &[usize]| v.iter().filter(|&&t| t >= first).map(|&t| t - first).collect();
        (shift(&self.noise), shift(&self.speech))
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_sets(noise: &[usize], speech: &[usize]) -> Result<(), TrainError> {
    if noise.is_empty() && speech.is_empty() {
        Err(TrainError::EmptyFrameSets)
    } else {
        Ok(())
    }
}

/// Frame-averaged binary cross-entropy on probabilities.
pub fn bce_loss(scores: &[f64], noise: &[usize], speech: &[usize]) -> Result<f64, TrainError> {
    check_sets(noise, speech)?;
    let mut loss = 0.0;
    if !noise.is_empty() {
        loss -= noise.iter().map(|&t| (1.0 - scores[t]).ln()).sum::<f64>() / noise.len() as f64;
    }
    if !speech.is_empty() {
        loss -= speech.iter().map(|&t| scores[t].ln()).sum::<f64>() / speech.len() as f64;
    }
    Ok(loss)
}

fn argmax(values: &[f64], set: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &t in set {
        if best.is_none_or(|b| values[t] > values[b]) {
            best = Some(t);
        }
    }
    best
}

/// Max-pooling loss on probabilities: only the highest-scoring frame of each
/// set contributes.
pub fn max_pool_loss(scores: &[f64], noise: &[usize], speech: &[usize]) -> Result<f64, TrainError> {
    check_sets(noise, speech)?;
    let mut loss = 0.0;
    if let Some(t) = argmax(scores, noise) {
        loss -= (1.0 - scores[t]).ln();
    }
    if let Some(t) = argmax(scores, speech) {
        loss -= scores[t].ln();
    }
    Ok(loss)
}

/// Loss and its derivative with respect to each logit.
pub fn loss_and_logit_grad(
    kind: LossKind,
    logits: &[f64],
    noise: &[usize],
    speech: &[usize],
) -> Result<(f64, Vec<f64>), TrainError> {
    check_sets(noise, speech)?;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    match kind {
        LossKind::Bce => {
            if !noise.is_empty() {
                let n = noise.len() as f64;
                for &t in noise {
                    loss += softplus(logits[t]) / n;
                    grad[t] += logistic(logits[t]) / n;
                }
            }
            if !speech.is_empty() {
                let n = speech.len() as f64;
                for &t in speech {
                    loss += softplus(-logits[t]) / n;
                    grad[t] -= logistic(-logits[t]) / n;
                }
            }
        }
        LossKind::MaxPool => {
            if let Some(t) = argmax(logits, noise) {
                loss += softplus(logits[t]);
                grad[t] += logistic(logits[t]);
            }
            if let Some(t) = argmax(logits, speech) {
                loss += softplus(-logits[t]);
                grad[t] -= logistic(-logits[t]);
            }
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!(bce_loss(&[0.0, 0.0, 1.0], &[0, 1], &[2]).unwrap().abs() < 1e-15);
        let l = bce_loss(&[0.5, 0.5], &[0, 1], &[]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = bce_loss(&[0.9], &[], &[0]).unwrap();
        assert!((l + 0.9f64.ln()).abs() < 1e-12);
        assert!((l - 0.1054).abs() < 1e-4);
        assert!(matches!(bce_loss(&[0.5], &[], &[]), Err(TrainError::EmptyFrameSets)));
    }

    #[test]
    fn max_pool_examples() {
        let scores = [0.1, 0.3, 0.2, 0.9, 0.4];
        let l = max_pool_loss(&scores, &[0, 1], &[2, 3, 4]).unwrap();
        let expected = -(0.7f64).ln() - (0.9f64).ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.4620).abs() < 1e-4);
        assert_eq!(max_pool_loss(&[0.0, 0.0], &[0, 1], &[]).unwrap(), 0.0);
        assert_eq!(max_pool_loss(&[0.0, 1.0], &[0], &[1]).unwrap(), 0.0);
        assert!(max_pool_loss(&[0.5], &[], &[]).is_err());
    }

    #[test]
    fn logit_domain_agrees_and_max_pool_gradient_is_sparse() {
        let logits = [-1.0, 0.5, -0.2, 2.0, 1.5, 0.3];
        let probs: Vec<f64> = logits.iter().map(|&z| logistic(z)).collect();
        let (noise, speech) = ([0, 1, 2], [3, 4, 5]);
        let (l, g) = loss_and_logit_grad(LossKind::MaxPool, &logits, &noise, &speech).unwrap();
        assert!((l - max_pool_loss(&probs, &noise, &speech).unwrap()).abs() < 1e-12);
        assert_eq!(g.iter().filter(|&&v| v != 0.0).count(), 2);
        assert!(g[1] > 0.0 && g[3] < 0.0);
        let (l, g) = loss_and_logit_grad(LossKind::Bce, &logits, &noise, &speech).unwrap();
        assert!((l - bce_loss(&probs, &noise, &speech).unwrap()).abs() < 1e-12);
        assert!(g.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn losses_nonnegative() {
        let logits = [-3.0, 4.0, 0.0];
        for kind in [LossKind::Bce, LossKind::MaxPool] {
            assert!(loss_and_logit_grad(kind, &logits, &[0], &[1, 2]).unwrap().0 >= 0.0);
        }
    }

    #[test]
    fn labels_with_guard_band() {
        let frames = FrameSeq { dim: 1, data: vec![0.0; 100] };
        let s = LabeledSequence::new(frames.clone(), Some(70), 5).unwrap();
        assert_eq!(s.speech, (70..100).collect::<Vec<_>>());
        assert_eq!(s.noise, (0..65).collect::<Vec<_>>());
        s.validate().unwrap();
        let n = LabeledSequence::new(frames.clone(), None, 5).unwrap();
        assert_eq!(n.noise.len(), 100);
        assert!(n.speech.is_empty());
        assert!(LabeledSequence::new(frames, Some(100), 5).is_err());
    }
}
