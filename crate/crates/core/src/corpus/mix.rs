//! Level-controlled mixing of noise sections and speech onsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::afe::{rms, AudioClip, FRAME_SAMPLES, SAMPLE_RATE};

/// Length of the mixed speech onset: 300 ms.
pub const SPEECH_SECTION_SAMPLES: usize = 4_800;
/// Clipping above this fraction of samples is reported.
pub const CLIP_WARN_FRACTION: f64 = 0.001;

/// Peak-to-RMS ratio in dB.
pub fn crest_factor(clip: &AudioClip) -> Result<f64, CorpusError> {
    let peak = clip.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(CorpusError::Silent("crest factor of an all-zero clip".into()));
    }
    Ok(20.0 * (peak / rms(&clip.samples)).log10())
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Scales `section` so its RMS equals `level_db` dBFS.
pub fn scale_to_level(section: &[f64], level_db: f64) -> Result<Vec<f64>, CorpusError> {
    let r = rms(section);
    if r == 0.0 || !r.is_finite() {
        return Err(CorpusError::Silent("cannot scale a silent section to a level".into()));
    }
    let g = db_to_amplitude(level_db) / r;
    Ok(section.iter().map(|s| s * g).collect())
}

/// Rounds a duration to whole feature frames.
pub fn duration_to_samples(seconds: f64) -> usize {
    let frames = (seconds * SAMPLE_RATE as f64 / FRAME_SAMPLES as f64).round() as usize;
    frames.max(1) * FRAME_SAMPLES
}

/// Seeded white Gaussian noise.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Label {
    NoiseOnly,
    Speech { start_time: f64 },
}

/// A rendered example with its scaled components kept for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixed {
    pub clip: AudioClip,
    pub label: Label,
    pub noise: Vec<f64>,
    /// Scaled speech onset, aligned with the last 300 ms of the clip.
    pub speech: Option<Vec<f64>>,
    pub clipped_fraction: f64,
}

impl Mixed {
    /// First speech sample, if any.
    pub fn start_sample(&self) -> Option<usize> {
        self.speech.as_ref().map(|_| self.clip.len() - SPEECH_SECTION_SAMPLES)
    }
}

/// Scales the noise section and, for speech examples, adds the scaled
/// 300 ms speech onset over the end of the clip.
pub fn mix(noise_section: &[f64], noise_level_db: f64, speech: Option<(&[f64], f64)>) -> Result<Mixed, CorpusError> {
    let n = noise_section.len();
    let noise = scale_to_level(noise_section, noise_level_db)?;
    let mut samples = noise.clone();
    let (label, speech) = match speech {
        None => (Label::NoiseOnly, None),
        Some((onset, level)) => {
            if onset.len() != SPEECH_SECTION_SAMPLES {
                return Err(CorpusError::SpeechTooShort(onset.len()));
            }
            if n < SPEECH_SECTION_SAMPLES {
                return Err(CorpusError::Config(format!("clip of {n} samples cannot hold a 300 ms onset")));
            }
            let scaled = scale_to_level(onset, level)?;
            for (s, v) in samples[n - SPEECH_SECTION_SAMPLES..].iter_mut().zip(&scaled) {
                *s += v;
            }
            let start = (n - SPEECH_SECTION_SAMPLES) as f64 / SAMPLE_RATE as f64;
            (Label::Speech { start_time: start }, Some(scaled))
        }
    };
    let mut clipped = 0usize;
    for s in &mut samples {
        if s.abs() > 1.0 {
            *s = s.clamp(-1.0, 1.0);
            clipped += 1;
        }
    }
    let clipped_fraction = clipped as f64 / n.max(1) as f64;
    if clipped_fraction > CLIP_WARN_FRACTION {
        log::warn!("mixing clipped {:.3}% of samples", 100.0 * clipped_fraction);
    }
    Ok(Mixed { clip: AudioClip::new(samples), label, noise, speech, clipped_fraction })
}

/// Picks a random section of `noise_clip` and mixes it at the requested
/// levels. `speech` is a source clip with its detected start sample.
pub fn synth_example(
    noise_clip: &AudioClip,
    speech: Option<(&AudioClip, usize)>,
    noise_level_db: f64,
    speech_level_db: f64,
    duration_samples: usize,
    seed: u64,
) -> Result<Mixed, CorpusError> {
    if noise_clip.len() < duration_samples {
        return Err(CorpusError::NoiseTooShort { have: noise_clip.len(), need: duration_samples });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..=noise_clip.len() - duration_samples);
    let section = &noise_clip.samples[offset..offset + duration_samples];
    let onset = match speech {
        None => None,
        Some((clip, start)) => Some((speech_onset(clip, start)?, speech_level_db)),
    };
    mix(section, noise_level_db, onset)
}

/// The 300 ms following `start`.
pub fn speech_onset(clip: &AudioClip, start: usize) -> Result<&[f64], CorpusError> {
    let end = start + SPEECH_SECTION_SAMPLES;
    if end > clip.len() {
        return Err(CorpusError::SpeechTooShort(clip.len().saturating_sub(start)));
    }
    Ok(&clip.samples[start..end])
}
