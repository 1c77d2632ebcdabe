//! Automatic speech-start labelling of near-clean command recordings.

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::afe::{AudioClip, FRAME_SAMPLES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartDetectorConfig {
    pub window_samples: usize,
    /// Energy rise over the noise floor that counts as speech.
    pub rise_db: f64,
    /// Consecutive windows above the rise.
    pub min_windows: usize,
    pub preroll_samples: usize,
    /// Percentile of window energies taken as the noise floor.
    pub floor_percentile: f64,
    /// Lowest admissible noise floor.
    pub min_floor_db: f64,
}

impl Default for StartDetectorConfig {
    fn default() -> Self {
        StartDetectorConfig {
            window_samples: FRAME_SAMPLES,
            rise_db: 12.0,
            min_windows: 3,
            preroll_samples: FRAME_SAMPLES,
            floor_percentile: 10.0,
            min_floor_db: -90.0,
        }
    }
}

fn window_db(samples: &[f64]) -> f64 {
    let e = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    10.0 * e.max(1e-30).log10()
}

/// First sample of speech: the earliest run of `min_windows` windows at
/// least `rise_db` above the noise floor, minus the pre-roll.
pub fn detect_speech_start_sample(clip: &AudioClip, cfg: &StartDetectorConfig) -> Result<usize, CorpusError> {
    let w = cfg.window_samples.max(1);
    let levels: Vec<f64> = clip.samples.chunks_exact(w).map(window_db).collect();
    if levels.is_empty() {
        return Err(CorpusError::NoSpeechDetected);
    }
    let mut sorted = levels.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((cfg.floor_percentile / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    let floor = sorted[idx.min(sorted.len() - 1)].max(cfg.min_floor_db);
    let mut run = 0;
    for (i, &l) in levels.iter().enumerate() {
        if l >= floor + cfg.rise_db {
            run += 1;
            if run >= cfg.min_windows {
                let first = i + 1 - run;
                return Ok((first * w).saturating_sub(cfg.preroll_samples));
            }
        } else {
            run = 0;
        }
    }
    Err(CorpusError::NoSpeechDetected)
}

/// Speech start in seconds.
pub fn detect_speech_start(clip: &AudioClip, cfg: &StartDetectorConfig) -> Result<f64, CorpusError> {
    Ok(detect_speech_start_sample(clip, cfg)? as f64 / clip.sample_rate as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, dbfs: f64) -> Vec<f64> {
        let a = 10f64.powf(dbfs / 20.0) * 2f64.sqrt();
        (0..n).map(|i| a * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin()).collect()
    }

    #[test]
    fn tone_burst_after_silence() {
        let mut s = vec![0.0; 8_000];
        s.extend(tone(8_000, -20.0));
        let t = detect_speech_start(&AudioClip::new(s), &StartDetectorConfig::default()).unwrap();
        assert!((0.48..=0.51).contains(&t), "{t}");
    }

    #[test]
    fn silence_has_no_speech() {
        let r = detect_speech_start(&AudioClip::new(vec![0.0; 16_000]), &StartDetectorConfig::default());
        assert!(matches!(r, Err(CorpusError::NoSpeechDetected)));
    }

    #[test]
    fn start_at_zero_is_clamped() {
        let mut s = tone(8_000, -20.0);
        s.extend(vec![0.0; 8_000]);
        assert_eq!(detect_speech_start(&AudioClip::new(s), &StartDetectorConfig::default()).unwrap(), 0.0);
    }
}
