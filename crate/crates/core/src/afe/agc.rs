//! Stepped automatic gain control.
//!
//! Gain codes 0..=5 map to 0..30 dB in 6 dB steps. The gain drops by one code
//! as soon as the amplified sample exceeds the high threshold and rises by one
//! code after the amplified signal has stayed below the low threshold for a
//! hold period. Any change starts a refractory window during which the gain is
//! frozen.

use serde::{Deserialize, Serialize};

pub const MAX_GAIN_CODE: u8 = 5;
pub const GAIN_STEP_DB: f64 = 6.0;

/// Converts a level in dBFS to a linear amplitude.
pub fn dbfs_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Linear gain for a code.
pub fn code_gain(code: u8) -> f64 {
    10f64.powf(GAIN_STEP_DB * code as f64 / 20.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgcConfig {
    /// Instantaneous level above which the gain is stepped down, in dBFS.
    pub high_dbfs: f64,
    /// Level below which the hold timer runs, in dBFS.
    pub low_dbfs: f64,
    /// Samples spent below the low threshold before a step up (30 ms).
    pub hold_samples: u32,
    /// Samples after any gain change during which the gain is frozen (10 ms).
    pub refractory_samples: u32,
    pub initial_code: u8,
    /// Freeze the gain entirely (used for linearity checks).
    pub frozen: bool,
}

impl Default for AgcConfig {
    fn default() -> Self {
        AgcConfig {
            high_dbfs: -6.0,
            low_dbfs: -36.0,
            hold_samples: 480,
            refractory_samples: 160,
            initial_code: 0,
            frozen: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgcState {
    pub gain_code: u8,
    /// Consecutive samples counted below the low threshold.
    pub low_timer: u32,
    /// Samples left in the refractory window.
    pub refractory: u32,
    pub high_thresh: f64,
    pub low_thresh: f64,
    hold_samples: u32,
    refractory_samples: u32,
    frozen: bool,
}

impl AgcState {
    pub fn new(cfg: &AgcConfig) -> Self {
        let high_thresh = dbfs_to_amplitude(cfg.high_dbfs);
        let low_thresh = dbfs_to_amplitude(cfg.low_dbfs);
        assert!(
            0.0 < low_thresh && low_thresh < high_thresh && high_thresh <= 1.0,
            "AGC thresholds must satisfy 0 < low < high <= 1"
        );
        AgcState {
            gain_code: cfg.initial_code.min(MAX_GAIN_CODE),
            low_timer: 0,
            refractory: 0,
            high_thresh,
            low_thresh,
            hold_samples: cfg.hold_samples.max(1),
            refractory_samples: cfg.refractory_samples,
            frozen: cfg.frozen,
        }
    }

    /// Amplifies one sample with the current gain and updates the state.
    ///
    /// The returned sample is saturated to full scale.
    pub fn step(&mut self, sample: f64) -> f64 {
        let out = sample * code_gain(self.gain_code);
        if !self.frozen {
            self.update(out.abs());
        }
        out.clamp(-1.0, 1.0)
    }

    fn update(&mut self, level: f64) {
        if self.refractory > 0 {
            self.refractory -= 1;
            self.low_timer = 0;
            return;
        }
        if level > self.high_thresh {
            self.low_timer = 0;
            if self.gain_code > 0 {
                self.gain_code -= 1;
                self.refractory = self.refractory_samples;
            }
        } else if level < self.low_thresh {
            self.low_timer += 1;
            if self.low_timer >= self.hold_samples {
                self.low_timer = 0;
                if self.gain_code < MAX_GAIN_CODE {
                    self.gain_code += 1;
                    self.refractory = self.refractory_samples;
                }
            }
        } else {
            self.low_timer = 0;
        }
    }

    /// Gain code scaled to `[0, 1]`, the classifier's seventeenth input.
    pub fn gain_feature(&self) -> f64 {
        self.gain_code as f64 / MAX_GAIN_CODE as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_at(code: u8) -> AgcState {
        AgcState::new(&AgcConfig { initial_code: code, ..AgcConfig::default() })
    }

    #[test]
    fn loud_sample_steps_down_once() {
        let mut agc = state_at(3);
        agc.step(0.9);
        assert_eq!(agc.gain_code, 2);
        // refractory: a second loud sample right after does nothing
        agc.step(0.9);
        assert_eq!(agc.gain_code, 2);
    }

    #[test]
    fn floor_clamp_at_zero() {
        let mut agc = state_at(0);
        for _ in 0..1000 {
            agc.step(0.99);
        }
        assert_eq!(agc.gain_code, 0);
    }

    #[test]
    fn quiet_for_hold_period_steps_up() {
        let mut agc = state_at(2);
        for _ in 0..479 {
            agc.step(0.0);
        }
        assert_eq!(agc.gain_code, 2);
        agc.step(0.0);
        assert_eq!(agc.gain_code, 3);
    }

    #[test]
    fn interrupted_quiet_resets_the_timer() {
        let mut agc = state_at(2);
        for _ in 0..400 {
            agc.step(0.0);
        }
        // mid-range sample, between the thresholds at gain code 2
        agc.step(0.05);
        for _ in 0..400 {
            agc.step(0.0);
        }
        assert_eq!(agc.gain_code, 2);
    }

    #[test]
    fn saturates_output() {
        let mut agc = state_at(5);
        assert_eq!(agc.step(0.5), 1.0);
        assert_eq!(agc.step(-0.5), -1.0);
    }
}
