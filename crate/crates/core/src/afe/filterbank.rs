//! Bandpass filter bank and the per-band energy low-pass.
//!
//! Each band is a two-pole/two-zero resonator obtained from the analogue
//! prototype `H(s) = (w0/Q) s / (s^2 + (w0/Q) s + w0^2)` through the bilinear
//! transform with the centre frequency pre-warped. Pre-warping pins the peak
//! (unity gain) at the centre frequency; the bilinear map still squeezes the
//! bandwidth near Nyquist, so the analogue Q of each band is solved for such
//! that the *digital* -3 dB bandwidth equals `f_c / Q`.

use std::f64::consts::PI;

/// Number of bands in the bank.
pub const NUM_BANDS: usize = 16;
/// Lowest centre frequency in Hz.
pub const LOWEST_CENTER_HZ: f64 = 100.0;
/// Highest centre frequency in Hz.
pub const HIGHEST_CENTER_HZ: f64 = 7000.0;
/// Quality factor of every band.
pub const BAND_Q: f64 = 4.0;

/// Direct-form-I biquad coefficients, normalised so that `a0 == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex frequency response magnitude at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        // H(e^jw) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = self.b1 * s1 + self.b2 * s2;
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = self.a1 * s1 + self.a2 * s2;
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// Running state of one biquad.
#[derive(Clone, Copy, Debug, Default)]
pub struct BiquadState {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BiquadState {
    #[inline]
    pub fn process(&mut self, c: &Biquad, x: f64) -> f64 {
        let y = c.b0 * x + c.b1 * self.x1 + c.b2 * self.x2 - c.a1 * self.y1 - c.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// The 16-band analysis bank.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub sample_rate: f64,
    pub center_freqs: [f64; NUM_BANDS],
    pub bands: [Biquad; NUM_BANDS],
}

impl FilterBank {
    /// Measured -3 dB bandwidth (Hz) of band `i`, found by bisection on the
    /// magnitude response on either side of the centre.
    pub fn bandwidth_3db(&self, i: usize) -> f64 {
        let band = &self.bands[i];
        let fc = self.center_freqs[i];
        let nyquist = self.sample_rate / 2.0;
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let edge = |mut lo: f64, mut hi: f64, rising: bool| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let above = band.magnitude(mid, self.sample_rate) >= target;
                if above == rising {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let lower = edge(1e-6, fc, true);
        let upper = edge(fc, nyquist * (1.0 - 1e-12), false);
        upper - lower
    }
}

/// Centre frequency of band `i`: log-spaced from 100 Hz to 7 kHz.
pub fn center_frequency(i: usize) -> f64 {
    let ratio = HIGHEST_CENTER_HZ / LOWEST_CENTER_HZ;
    LOWEST_CENTER_HZ * ratio.powf(i as f64 / (NUM_BANDS - 1) as f64)
}

fn bandpass_from_prewarped(k: f64, analog_q: f64) -> Biquad {
    // s = (1/K)(1 - z^-1)/(1 + z^-1) applied to the normalised prototype
    // s/Q / (s^2 + s/Q + 1), K = tan(w0/2).
    let norm = 1.0 + k / analog_q + k * k;
    let b0 = (k / analog_q) / norm;
    Biquad { b0, b1: 0.0, b2: -b0, a1: 2.0 * (k * k - 1.0) / norm, a2: (1.0 - k / analog_q + k * k) / norm }
}

/// Plain pre-warped bandpass resonator with analogue quality factor `q`.
pub fn bandpass(center_hz: f64, q: f64, sample_rate: f64) -> Biquad {
    bandpass_from_prewarped((PI * center_hz / sample_rate).tan(), q)
}

/// Digital -3 dB bandwidth (Hz) of the pre-warped resonator in closed form.
///
/// The band edges of the prototype satisfy `K_lo * K_hi = K0^2` and
/// `K_hi - K_lo = K0 / Q` in the tan-warped domain.
fn digital_bandwidth(k0: f64, analog_q: f64, sample_rate: f64) -> f64 {
    let half = k0 / (2.0 * analog_q);
    let k_hi = half + (half * half + k0 * k0).sqrt();
    let k_lo = k_hi - k0 / analog_q;
    let to_hz = |k: f64| k.atan() * sample_rate / PI;
    to_hz(k_hi) - to_hz(k_lo)
}

/// Analogue Q giving a digital bandwidth of exactly `fc / q`.
fn compensated_q(fc: f64, q: f64, sample_rate: f64) -> f64 {
    let k0 = (PI * fc / sample_rate).tan();
    let wanted = fc / q;
    // bandwidth is strictly decreasing in the analogue Q
    let (mut lo, mut hi) = (q * 1e-3, q * 1e3);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if digital_bandwidth(k0, mid, sample_rate) > wanted {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Designs the 16-band bank for the given sample rate.
pub fn design_filterbank(sample_rate: f64) -> FilterBank {
    let mut center_freqs = [0.0; NUM_BANDS];
    let mut bands = [Biquad { b0: 0.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 }; NUM_BANDS];
    for i in 0..NUM_BANDS {
        let fc = center_frequency(i);
        let k0 = (PI * fc / sample_rate).tan();
        center_freqs[i] = fc;
        bands[i] = bandpass_from_prewarped(k0, compensated_q(fc, BAND_Q, sample_rate));
    }
    FilterBank { sample_rate, center_freqs, bands }
}

/// First-order low-pass `y[n] = b0 (x[n] + x[n-1]) - a1 y[n-1]`, bilinear
/// discretisation of `wc / (s + wc)` with pre-warped cut-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnePole {
    pub b0: f64,
    pub a1: f64,
}

impl OnePole {
    pub fn lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let k = (PI * cutoff_hz / sample_rate).tan();
        OnePole { b0: k / (1.0 + k), a1: (k - 1.0) / (k + 1.0) }
    }

    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let num = self.b0 * (2.0 + 2.0 * w.cos()).sqrt();
        let den = ((1.0 + self.a1 * w.cos()).powi(2) + (self.a1 * w.sin()).powi(2)).sqrt();
        num / den
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OnePoleState {
    x1: f64,
    y1: f64,
}

impl OnePoleState {
    #[inline]
    pub fn process(&mut self, c: &OnePole, x: f64) -> f64 {
        let y = c.b0 * (x + self.x1) - c.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_frequencies_span_and_ratio() {
        let bank = design_filterbank(16_000.0);
        assert!((bank.center_freqs[0] - 100.0).abs() < 1e-9);
        assert!((bank.center_freqs[15] - 7000.0).abs() < 1e-9);
        // independent evaluation of 100 * 70^(i/15)
        let ratio = 70f64.powf(1.0 / 15.0);
        assert!((ratio - 1.327_414_4).abs() < 1e-6);
        for i in 0..15 {
            let r = bank.center_freqs[i + 1] / bank.center_freqs[i];
            assert!((r - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn unity_peak_and_q_of_four() {
        let bank = design_filterbank(16_000.0);
        for i in 0..NUM_BANDS {
            let fc = bank.center_freqs[i];
            let peak_db = 20.0 * bank.bands[i].magnitude(fc, 16_000.0).log10();
            assert!(peak_db.abs() <= 0.5, "band {i} peak {peak_db} dB");
            // scan around the centre: nothing is louder than the centre
            for step in 1..200 {
                let f = fc * (0.5 + step as f64 / 200.0);
                if f < 8000.0 {
                    assert!(bank.bands[i].magnitude(f, 16_000.0) <= 1.0 + 1e-9);
                }
            }
            let q = fc / bank.bandwidth_3db(i);
            assert!((q - BAND_Q).abs() <= 0.05 * BAND_Q, "band {i} Q = {q}");
        }
    }

    #[test]
    fn lowpass_cutoff_is_minus_3db() {
        let lp = OnePole::lowpass(16.0, 16_000.0);
        assert!((lp.magnitude(0.0, 16_000.0) - 1.0).abs() < 1e-12);
        let db = 20.0 * lp.magnitude(16.0, 16_000.0).log10();
        assert!((db + 3.0103).abs() < 1e-3);
    }

    #[test]
    fn biquad_state_tracks_steady_state_gain() {
        let bank = design_filterbank(16_000.0);
        let band = 8;
        let fc = bank.center_freqs[band];
        let mut st = BiquadState::default();
        let mut peak: f64 = 0.0;
        for n in 0..32_000 {
            let x = (2.0 * PI * fc * n as f64 / 16_000.0).sin();
            let y = st.process(&bank.bands[band], x);
            if n > 16_000 {
                peak = peak.max(y.abs());
            }
        }
        assert!((peak - 1.0).abs() < 1e-3);
    }
}
