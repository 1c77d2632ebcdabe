//! Digital model of the analogue feature front-end.
//!
//! Per sample: stepped AGC, 16 bandpass resonators, full-wave rectification
//! and a 16 Hz first-order low-pass per band. Every 160 samples (100 Hz) the
//! low-pass outputs are sampled together with the AGC gain code to form one
//! 17-dimensional [`FeatureFrame`]. Filter state is never reset between
//! frames.
//!
//! Levels are expressed in dBFS with digital full scale (1.0) standing for
//! 110 dB SPL, so a -50 dBFS RMS noise corresponds to 60 dB SPL.

pub mod agc;
pub mod filterbank;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agc::{AgcConfig, AgcState};
pub use filterbank::{design_filterbank, FilterBank, NUM_BANDS};

use filterbank::{BiquadState, OnePole, OnePoleState};

pub const SAMPLE_RATE: u32 = 16_000;
/// Samples per feature frame (10 ms).
pub const FRAME_SAMPLES: usize = 160;
pub const FRAME_RATE_HZ: f64 = 100.0;
/// Flattened feature dimension: band energies plus the gain code.
pub const FEATURE_DIM: usize = NUM_BANDS + 1;

/// Full scale of the digital model in dB SPL.
pub const FULL_SCALE_DB_SPL: f64 = 110.0;

pub fn dbfs_to_spl(dbfs: f64) -> f64 {
    dbfs + FULL_SCALE_DB_SPL
}

#[derive(Debug, Error, PartialEq)]
pub enum AfeError {
    #[error("clip has {0} samples, at least {FRAME_SAMPLES} are needed for one feature frame")]
    EmptyFeatures(usize),
    #[error("sample rate {0} Hz is not supported, expected {SAMPLE_RATE} Hz")]
    SampleRate(u32),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

/// Mono audio at 16 kHz, amplitudes relative to digital full scale.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Self {
        AudioClip { samples, sample_rate: SAMPLE_RATE }
    }

    pub fn validate(&self) -> Result<(), AfeError> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(AfeError::SampleRate(self.sample_rate));
        }
        if let Some(index) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(AfeError::NonFinite { index });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// RMS level in dBFS (`-inf` for silence).
    pub fn rms_dbfs(&self) -> f64 {
        rms_dbfs(&self.samples)
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn rms_dbfs(samples: &[f64]) -> f64 {
    20.0 * rms(samples).log10()
}

/// One 10 ms feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub band_energy: [f64; NUM_BANDS],
    pub gain_feature: f64,
}

impl FeatureFrame {
    pub fn zeros() -> Self {
        FeatureFrame { band_energy: [0.0; NUM_BANDS], gain_feature: 0.0 }
    }

    /// Flattened classifier input: 16 band energies followed by the gain.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.band_energy);
        v.push(self.gain_feature);
        v
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != FEATURE_DIM {
            return None;
        }
        let mut band_energy = [0.0; NUM_BANDS];
        band_energy.copy_from_slice(&values[..NUM_BANDS]);
        Some(FeatureFrame { band_energy, gain_feature: values[NUM_BANDS] })
    }
}

/// Optional compression applied to band energies before framing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compression {
    Linear,
    /// `ln(1 + e/floor) / ln(1 + 1/floor)`, maps `[0, 1]` onto `[0, 1]`.
    Log {
        floor: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfeConfig {
    pub agc: AgcConfig,
    pub lowpass_hz: f64,
    /// Band energy that maps to ADC full scale. Band energies are divided
    /// by this value.
    pub adc_full_scale: f64,
    /// Uniform ADC resolution; `None` keeps real-valued features.
    pub adc_bits: Option<u32>,
    pub compression: Compression,
}

impl Default for AfeConfig {
    fn default() -> Self {
        AfeConfig {
            agc: AgcConfig::default(),
            lowpass_hz: 16.0,
            adc_full_scale: 0.125,
            adc_bits: None,
            compression: Compression::Linear,
        }
    }
}

/// Quantises a value in `[0, 1]` to an unsigned `bits`-bit code grid.
pub fn adc_quantize(value: f64, bits: u32) -> f64 {
    let top = ((1u64 << bits) - 1) as f64;
    (value.clamp(0.0, 1.0) * top).round() / top
}

/// Streaming extractor. One instance per clip; not meant to be shared.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    cfg: AfeConfig,
    bank: FilterBank,
    lowpass: OnePole,
    agc: AgcState,
    band_states: [BiquadState; NUM_BANDS],
    lp_states: [OnePoleState; NUM_BANDS],
    phase: usize,
}

impl FeatureExtractor {
    pub fn new(cfg: &AfeConfig) -> Self {
        let fs = SAMPLE_RATE as f64;
        FeatureExtractor {
            cfg: cfg.clone(),
            bank: design_filterbank(fs),
            lowpass: OnePole::lowpass(cfg.lowpass_hz, fs),
            agc: AgcState::new(&cfg.agc),
            band_states: [BiquadState::default(); NUM_BANDS],
            lp_states: [OnePoleState::default(); NUM_BANDS],
            phase: 0,
        }
    }

    pub fn agc(&self) -> &AgcState {
        &self.agc
    }

    /// Feeds one sample; returns a frame at every 160th sample.
    pub fn push(&mut self, sample: f64) -> Option<FeatureFrame> {
        let x = self.agc.step(sample);
        let mut energies = [0.0; NUM_BANDS];
        for (b, e) in energies.iter_mut().enumerate() {
            let y = self.band_states[b].process(&self.bank.bands[b], x);
            *e = self.lp_states[b].process(&self.lowpass, y.abs());
        }
        self.phase += 1;
        if self.phase < FRAME_SAMPLES {
            return None;
        }
        self.phase = 0;
        Some(self.frame_from(energies))
    }

    fn frame_from(&self, energies: [f64; NUM_BANDS]) -> FeatureFrame {
        let mut band_energy = [0.0; NUM_BANDS];
        for (out, e) in band_energy.iter_mut().zip(energies) {
            // the low-pass of a rectified signal can dip a hair below zero
            let mut v = e.max(0.0) / self.cfg.adc_full_scale;
            if let Compression::Log { floor } = self.cfg.compression {
                v = (v / floor).ln_1p() / (1.0 / floor).ln_1p();
            }
            if let Some(bits) = self.cfg.adc_bits {
                v = adc_quantize(v, bits);
            }
            *out = v;
        }
        let mut gain_feature = self.agc.gain_feature();
        if let Some(bits) = self.cfg.adc_bits {
            gain_feature = adc_quantize(gain_feature, bits);
        }
        FeatureFrame { band_energy, gain_feature }
    }
}

/// Runs the front-end over a whole clip; yields `floor(len / 160)` frames.
pub fn extract_features(clip: &AudioClip, cfg: &AfeConfig) -> Result<Vec<FeatureFrame>, AfeError> {
    clip.validate()?;
    if clip.len() < FRAME_SAMPLES {
        return Err(AfeError::EmptyFeatures(clip.len()));
    }
    let mut ex = FeatureExtractor::new(cfg);
    let mut frames = Vec::with_capacity(clip.len() / FRAME_SAMPLES);
    for &s in &clip.samples {
        if let Some(f) = ex.push(s) {
            frames.push(f);
        }
    }
    Ok(frames)
}

/// Writes frames as CSV: `frame,band_00..band_15,gain`.
pub fn write_features_csv<W: Write>(mut out: W, frames: &[FeatureFrame]) -> std::io::Result<()> {
    write!(out, "frame")?;
    for b in 0..NUM_BANDS {
        write!(out, ",band_{b:02}")?;
    }
    writeln!(out, ",gain")?;
    for (i, f) in frames.iter().enumerate() {
        write!(out, "{i}")?;
        for e in &f.band_energy {
            write!(out, ",{e}")?;
        }
        writeln!(out, ",{}", f.gain_feature)?;
    }
    Ok(())
}
