//! Synthetic source material laid out like the public corpora the recipes
//! expect: `noise_dir/<Name>.wav` recordings and
//! `speech_dir/<phrase>/<speaker>_nohash_<n>.wav` command utterances.
//!
//! Commands come from a small formant synthesiser (glottal pulse train
//! through a time-varying formant cascade, plus band-limited frication and
//! stop bursts). Noises are procedural scenes mixing coloured noise with
//! discrete events. The material is meant to exercise the pipeline, not to
//! pass for real recordings.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mix::crest_factor;
use super::partition::{TEST_NOISES, TEST_PHRASES, WHITE};
use super::wav::write_wav;
use super::CorpusError;
use crate::afe::filterbank::{bandpass, Biquad, BiquadState, OnePole, OnePoleState};
use crate::afe::{rms, AudioClip, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;

pub const TRAINING_PHRASES: [&str; 24] = [
    "yes", "up", "down", "left", "right", "on", "off", "stop", "go", "zero", "one", "two", "three", "four", "six",
    "eight", "nine", "bed", "bird", "dog", "happy", "house", "tree", "sheila",
];

/// Training noise families. Each is written in several randomised
/// variants, all meant to pass the length and crest-factor filter.
pub const TRAINING_NOISES: [&str; 10] = [
    "Cafe_Dishes",
    "Office_Chatter",
    "Keyboard_Typing",
    "Construction_Site",
    "Wind_Gusts",
    "Water_Drips",
    "Insects_Night",
    "Machinery_Clank",
    "Rain_Roof",
    "Engine_Idle",
];

/// Noises the training filter is expected to reject.
pub const REJECTED_NOISES: [&str; 2] = ["Fan_Hum", "Chimes_Short"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub utterances_per_phrase: usize,
    pub noise_secs: f64,
    /// Variants written per training noise family.
    pub noise_variants: usize,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig { utterances_per_phrase: 10, noise_secs: 40.0, noise_variants: 3, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub phrases: usize,
    pub utterances: usize,
    pub noises: Vec<(String, f64, f64)>,
}

// ---------------------------------------------------------------- speech

#[derive(Clone, Copy, Debug)]
struct Phone {
    formants: [f64; 3],
    voicing: f64,
    noise: f64,
    band: (f64, f64),
    dur_ms: f64,
    /// Silent closure before a stop burst.
    closure_ms: f64,
}

const NEUTRAL: [f64; 3] = [500.0, 1500.0, 2500.0];

fn vowel(f1: f64, f2: f64, f3: f64, dur: f64) -> Phone {
    Phone { formants: [f1, f2, f3], voicing: 1.0, noise: 0.0, band: (0.0, 0.0), dur_ms: dur, closure_ms: 0.0 }
}

fn sonorant(f1: f64, f2: f64, f3: f64, voicing: f64, dur: f64) -> Phone {
    Phone { voicing, ..vowel(f1, f2, f3, dur) }
}

fn fricative(lo: f64, hi: f64, noise: f64, voicing: f64, dur: f64) -> Phone {
    Phone { formants: NEUTRAL, voicing, noise, band: (lo, hi), dur_ms: dur, closure_ms: 0.0 }
}

fn stop(lo: f64, hi: f64, voiced: bool) -> Phone {
    Phone {
        formants: NEUTRAL,
        voicing: if voiced { 0.15 } else { 0.0 },
        noise: 0.35,
        band: (lo, hi),
        dur_ms: if voiced { 20.0 } else { 45.0 },
        closure_ms: if voiced { 35.0 } else { 55.0 },
    }
}

fn phone(sym: &str) -> Phone {
    match sym {
        "a" => vowel(730.0, 1090.0, 2440.0, 130.0),
        "ae" => vowel(660.0, 1720.0, 2410.0, 140.0),
        "e" => vowel(530.0, 1840.0, 2480.0, 110.0),
        "i" => vowel(270.0, 2290.0, 3010.0, 110.0),
        "ih" => vowel(390.0, 1990.0, 2550.0, 80.0),
        "o" => vowel(570.0, 840.0, 2410.0, 130.0),
        "u" => vowel(300.0, 870.0, 2240.0, 110.0),
        "ah" => vowel(640.0, 1190.0, 2390.0, 90.0),
        "er" => vowel(490.0, 1350.0, 1690.0, 130.0),
        "w" => sonorant(300.0, 610.0, 2200.0, 0.7, 60.0),
        "y" => sonorant(270.0, 2100.0, 3000.0, 0.7, 55.0),
        "r" => sonorant(420.0, 1300.0, 1600.0, 0.75, 60.0),
        "l" => sonorant(360.0, 1300.0, 2700.0, 0.7, 60.0),
        "m" => sonorant(250.0, 1000.0, 2200.0, 0.35, 70.0),
        "n" => sonorant(250.0, 1450.0, 2500.0, 0.35, 70.0),
        "s" => fricative(4000.0, 7500.0, 0.3, 0.0, 120.0),
        "z" => fricative(4000.0, 7500.0, 0.18, 0.4, 100.0),
        "sh" => fricative(2000.0, 5000.0, 0.3, 0.0, 120.0),
        "f" => fricative(1200.0, 7500.0, 0.1, 0.0, 100.0),
        "th" => fricative(1500.0, 7500.0, 0.07, 0.0, 90.0),
        "v" => fricative(1000.0, 6000.0, 0.06, 0.45, 70.0),
        "h" => fricative(500.0, 3000.0, 0.12, 0.0, 60.0),
        "p" => stop(500.0, 2000.0, false),
        "t" => stop(3500.0, 7000.0, false),
        "k" => stop(1500.0, 3500.0, false),
        "b" => stop(500.0, 2000.0, true),
        "d" => stop(3000.0, 6000.0, true),
        "g" => stop(1500.0, 3500.0, true),
        other => panic!("unknown phone {other}"),
    }
}

fn pronunciation(phrase: &str) -> &'static [&'static str] {
    match phrase {
        "cat" => &["k", "ae", "t"],
        "five" => &["f", "a", "i", "v"],
        "no" => &["n", "o", "u"],
        "seven" => &["s", "e", "v", "ah", "n"],
        "wow" => &["w", "a", "u"],
        "yes" => &["y", "e", "s"],
        "up" => &["ah", "p"],
        "down" => &["d", "a", "u", "n"],
        "left" => &["l", "e", "f", "t"],
        "right" => &["r", "a", "i", "t"],
        "on" => &["o", "n"],
        "off" => &["o", "f"],
        "stop" => &["s", "t", "o", "p"],
        "go" => &["g", "o", "u"],
        "zero" => &["z", "i", "r", "o", "u"],
        "one" => &["w", "ah", "n"],
        "two" => &["t", "u"],
        "three" => &["th", "r", "i"],
        "four" => &["f", "o", "r"],
        "six" => &["s", "ih", "k", "s"],
        "eight" => &["e", "i", "t"],
        "nine" => &["n", "a", "i", "n"],
        "bed" => &["b", "e", "d"],
        "bird" => &["b", "er", "d"],
        "dog" => &["d", "o", "g"],
        "happy" => &["h", "ae", "p", "i"],
        "house" => &["h", "a", "u", "s"],
        "tree" => &["t", "r", "i"],
        "sheila" => &["sh", "i", "l", "ah"],
        _ => &["ah"],
    }
}

/// Two-pole resonator with unity gain at DC.
#[derive(Clone, Copy, Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    #[inline]
    fn process(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let r = (-PI * bw / FS).exp();
        let c = 2.0 * r * (2.0 * PI * freq / FS).cos();
        let d = -r * r;
        let a = 1.0 - c - d;
        let y = a * x + c * self.y1 + d * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Speaker {
    f0: f64,
    formant_scale: f64,
    rate: f64,
    breath: f64,
}

/// Renders one utterance of `phrase` (no leading or trailing silence).
pub fn synthesize_phrase(phrase: &str, rng: &mut ChaCha8Rng) -> Vec<f64> {
    synthesize_phones(pronunciation(phrase), rng)
}

const VOWELS: [&str; 9] = ["a", "ae", "e", "i", "ih", "o", "u", "ah", "er"];
const CONSONANTS: [&str; 19] =
    ["w", "y", "r", "l", "m", "n", "s", "z", "sh", "f", "th", "v", "h", "p", "t", "k", "b", "d", "g"];

/// Random consonant-vowel syllables, the raw material for background talk.
fn random_word(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut out = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        if rng.gen_bool(0.8) {
            out.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        }
        out.push(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    out
}

fn synthesize_phones(symbols: &[&str], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = rng.gen_range(85.0..250.0);
    let spk = Speaker {
        f0,
        formant_scale: 0.9 + 0.25 * (f0 - 85.0) / 165.0 + rng.gen_range(-0.04..0.04),
        rate: rng.gen_range(0.8..1.25),
        breath: rng.gen_range(0.02..0.08),
    };
    let phones: Vec<Phone> = symbols.iter().map(|s| phone(s)).collect();
    // Key points (sample, formants, voicing, noise) for linear interpolation.
    let mut segments = Vec::new();
    let mut t = 0usize;
    for p in &phones {
        let closure = (p.closure_ms * spk.rate * FS / 1000.0) as usize;
        let dur = (p.dur_ms * spk.rate * rng.gen_range(0.85..1.15) * FS / 1000.0) as usize;
        segments.push((t, t + closure, t + closure + dur, *p));
        t += closure + dur;
    }
    let total = t;
    let ramp = (0.012 * FS) as usize;
    let mut out = vec![0.0; total];
    let mut res = [Resonator::default(); 4];
    let mut phase = 0.0;
    let (mut g1, mut g2) = (0.0, 0.0);
    let mut fric = BiquadState::default();
    let mut vibrato = rng.gen_range(0.0..2.0 * PI);
    for (k, &(start, voiced_from, end, p)) in segments.iter().enumerate() {
        let next = segments.get(k + 1).map(|s| s.3).unwrap_or(p);
        let prev = if k > 0 { segments[k - 1].3 } else { p };
        let band: Biquad = if p.noise > 0.0 {
            let c = (p.band.0 * p.band.1).sqrt();
            bandpass(c.min(7_600.0), c / (p.band.1 - p.band.0), FS)
        } else {
            bandpass(1000.0, 1.0, FS)
        };
        for (n, o) in out.iter_mut().enumerate().take(end).skip(start) {
            if n < voiced_from {
                // stop closure: near silence with optional voicing bar
                let bar = if p.voicing > 0.0 { 0.02 } else { 0.0 };
                *o = bar * (2.0 * PI * spk.f0 * n as f64 / FS).sin();
                continue;
            }
            let pos = n - voiced_from;
            let len = end - voiced_from;
            // formant transitions towards neighbours at both ends
            let w_in = if pos < ramp { 0.5 * (1.0 - pos as f64 / ramp as f64) } else { 0.0 };
            let w_out = if len - pos < ramp { 0.5 * (1.0 - (len - pos) as f64 / ramp as f64) } else { 0.0 };
            let f: [f64; 3] = std::array::from_fn(|i| {
                spk.formant_scale
                    * (p.formants[i] * (1.0 - w_in - w_out) + prev.formants[i] * w_in + next.formants[i] * w_out)
            });
            let voicing = p.voicing * (1.0 - w_in - w_out) + prev.voicing * w_in + next.voicing * w_out;
            let progress = n as f64 / total as f64;
            vibrato += 2.0 * PI * 5.0 / FS;
            let f0 = spk.f0
                * (1.12 - 0.28 * progress)
                * (1.0 + 0.01 * vibrato.sin())
                * (1.0 + 0.003 * rng.gen_range(-1.0..1.0));
            phase += f0 / FS;
            let mut pulse = 0.0;
            if phase >= 1.0 {
                phase -= 1.0;
                pulse = 1.0;
            }
            // two one-pole low-passes give a -12 dB/oct glottal spectrum
            g1 = 0.96 * g1 + pulse;
            g2 = 0.9 * g2 + g1;
            let aspiration = spk.breath * rng.sample::<f64, _>(StandardNormal);
            let src = voicing * (g2 * 0.08 + aspiration);
            let mut v = src;
            v = res[0].process(v, f[0], 80.0);
            v = res[1].process(v, f[1], 100.0);
            v = res[2].process(v, f[2], 150.0);
            v = res[3].process(v, 3500.0 * spk.formant_scale, 250.0);
            let burst_env = if p.closure_ms > 0.0 { (-(pos as f64) / (0.015 * FS)).exp().max(0.25) } else { 1.0 };
            let noise = p.noise * burst_env * fric.process(&band, rng.sample::<f64, _>(StandardNormal));
            *o = 4.0 * v + noise;
        }
    }
    let fade = (0.008 * FS) as usize;
    for i in 0..fade.min(total) {
        let g = i as f64 / fade as f64;
        out[i] *= g;
        out[total - 1 - i] *= g;
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
    let gain = rng.gen_range(0.3..0.7) / peak;
    out.iter_mut().for_each(|s| *s *= gain);
    out
}

/// A one-second (or longer) command recording with leading silence and a
/// faint background.
pub fn synthesize_utterance(phrase: &str, rng: &mut ChaCha8Rng) -> AudioClip {
    let speech = synthesize_phrase(phrase, rng);
    let lead = (rng.gen_range(0.08..0.3) * FS) as usize;
    let len = (lead + speech.len() + (0.1 * FS) as usize).max(SAMPLE_RATE as usize);
    let floor = 10f64.powf(-75.0 / 20.0);
    let mut s: Vec<f64> = (0..len).map(|_| floor * rng.sample::<f64, _>(StandardNormal)).collect();
    for (o, v) in s[lead..].iter_mut().zip(&speech) {
        *o += v;
    }
    AudioClip::new(s)
}

// ---------------------------------------------------------------- noise

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn pink(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Kellet's economy pink filter
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let w = gauss(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            (b0 + b1 + b2 + w * 0.1848) * 0.2
        })
        .collect()
}

fn brown(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = 0.0;
    (0..n)
        .map(|_| {
            y = 0.995 * y + 0.05 * gauss(rng);
            y
        })
        .collect()
}

fn filtered(signal: &[f64], center: f64, q: f64) -> Vec<f64> {
    let c = bandpass(center, q, FS);
    let mut st = BiquadState::default();
    signal.iter().map(|&x| st.process(&c, x)).collect()
}

fn normalize_rms(v: &mut [f64], target: f64) {
    let r = rms(v);
    if r > 0.0 {
        v.iter_mut().for_each(|s| *s *= target / r);
    }
}

fn add(dst: &mut [f64], src: &[f64], gain: f64) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += gain * s);
}

/// Poisson event times at `rate` per second.
fn events(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += -(1.0 - rng.gen::<f64>()).ln() / rate;
        let i = (t * FS) as usize;
        if i >= n {
            return out;
        }
        out.push(i);
    }
}

/// Decaying band-limited noise burst.
fn burst(dst: &mut [f64], at: usize, len_s: f64, center: f64, q: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let len = ((len_s * FS) as usize).max(4);
    let c = bandpass(center.min(7_600.0), q, FS);
    let mut st = BiquadState::default();
    for k in 0..len {
        if at + k >= dst.len() {
            break;
        }
        let env = (-(k as f64) / (len as f64 / 4.0)).exp();
        dst[at + k] += amp * env * st.process(&c, gauss(rng));
    }
}

/// Decaying sinusoid with optional pitch glide.
fn ping(dst: &mut [f64], at: usize, len_s: f64, f_start: f64, f_end: f64, amp: f64) {
    let len = ((len_s * FS) as usize).max(4);
    let mut ph = 0.0;
    for k in 0..len {
        if at + k >= dst.len() {
            break;
        }
        let x = k as f64 / len as f64;
        ph += 2.0 * PI * (f_start + (f_end - f_start) * x) / FS;
        dst[at + k] += amp * (-(x * 5.0)).exp() * ph.sin();
    }
}

/// Swept tone with a smooth envelope (chirps, squeals).
fn chirp(dst: &mut [f64], at: usize, len_s: f64, f_start: f64, f_end: f64, amp: f64, harmonic: f64) {
    let len = ((len_s * FS) as usize).max(4);
    let mut ph = 0.0;
    for k in 0..len {
        if at + k >= dst.len() {
            break;
        }
        let x = k as f64 / len as f64;
        ph += 2.0 * PI * (f_start + (f_end - f_start) * x) / FS;
        let env = (PI * x).sin().powi(2);
        dst[at + k] += amp * env * (ph.sin() + harmonic * (2.0 * ph).sin());
    }
}

/// Harmonic buzz `f0, 2 f0, ...` with 1/h amplitudes.
fn harmonic_tone(dst: &mut [f64], from: usize, to: usize, f0: f64, harmonics: usize, amp: f64) {
    for (k, d) in dst.iter_mut().enumerate().take(to).skip(from) {
        let t = k as f64 / FS;
        let mut v = 0.0;
        for h in 1..=harmonics {
            if f0 * h as f64 > 7_500.0 {
                break;
            }
            v += (2.0 * PI * f0 * h as f64 * t).sin() / h as f64;
        }
        *d += amp * v;
    }
}

/// Slow random amplitude modulation in `[1 - depth, 1 + depth]`.
fn modulate(dst: &mut [f64], rate_hz: f64, depth: f64, rng: &mut ChaCha8Rng) {
    let p1 = rng.gen_range(0.0..2.0 * PI);
    let p2 = rng.gen_range(0.0..2.0 * PI);
    for (k, d) in dst.iter_mut().enumerate() {
        let t = k as f64 / FS;
        let m = 0.6 * (2.0 * PI * rate_hz * t + p1).sin() + 0.4 * (2.0 * PI * rate_hz * 2.7 * t + p2).sin();
        *d *= 1.0 + depth * m;
    }
}

/// Distant talkers: random words at `rate` per second, low-passed and
/// smeared by a short decaying echo.
fn babble(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for at in events(n, rate, rng) {
        let word = random_word(rng);
        let w = synthesize_phones(&word, rng);
        let gain = rng.gen_range(0.3..1.0);
        let end = (at + w.len()).min(n);
        add(&mut out[at..end], &w, gain);
    }
    let mut room = vec![0.0; n];
    let taps = [(0usize, 1.0), (240, 0.5), (560, 0.3), (1100, 0.15)];
    for (d, g) in taps {
        for i in d..n {
            room[i] += g * out[i - d];
        }
    }
    let lp = OnePole::lowpass(2500.0, FS);
    let mut st = OnePoleState::default();
    room.iter_mut().for_each(|v| *v = st.process(&lp, *v));
    room
}

/// `v` scales the event rates of a scene.
fn scene(name: &str, n: usize, v: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    match name {
        "Rain_City" => {
            let mut hiss = filtered(&pink(n, rng), 3000.0, 0.5);
            normalize_rms(&mut hiss, 1.0);
            modulate(&mut hiss, 0.08, 0.3, rng);
            add(&mut out, &hiss, 1.0);
            let mut rumble = brown(n, rng);
            normalize_rms(&mut rumble, 0.5);
            add(&mut out, &rumble, 1.0);
            for at in events(n, 40.0 * v, rng) {
                let c = rng.gen_range(2000.0..7000.0);
                let a = 2.0 * (rng.gen_range(-1.5f64..1.0)).exp();
                burst(&mut out, at, rng.gen_range(0.002..0.008), c, 2.0, a, rng);
            }
        }
        "Traffic" => {
            let mut rumble = filtered(&brown(n, rng), 250.0, 0.5);
            normalize_rms(&mut rumble, 1.0);
            add(&mut out, &rumble, 1.0);
            let mut hiss = filtered(&pink(n, rng), 1500.0, 0.6);
            normalize_rms(&mut hiss, 0.35);
            modulate(&mut hiss, 0.15, 0.35, rng);
            add(&mut out, &hiss, 1.0);
            for at in events(n, 0.4 * v, rng) {
                let len = (rng.gen_range(2.0..4.0) * FS) as usize;
                let f0 = rng.gen_range(35.0..80.0);
                let mut car = vec![0.0; len];
                harmonic_tone(&mut car, 0, len, f0, 8, 0.15);
                let noise: Vec<f64> = (0..len).map(|_| gauss(rng)).collect();
                add(&mut car, &filtered(&noise, 600.0, 0.8), 0.3);
                for (k, c) in car.iter_mut().enumerate() {
                    *c *= (PI * k as f64 / len as f64).sin().powi(2);
                }
                let end = (at + len).min(n);
                add(&mut out[at..end], &car, 1.0);
            }
        }
        "Metro" => {
            let mut talk = babble(n, 1.5, rng);
            normalize_rms(&mut talk, 0.5);
            add(&mut out, &talk, 1.0);
            let mut rumble = brown(n, rng);
            normalize_rms(&mut rumble, 1.0);
            add(&mut out, &rumble, 1.0);
            harmonic_tone(&mut out, 0, n, 100.0, 12, 0.05);
            let mut t = rng.gen_range(0.0..0.9);
            while ((t + 0.2) * FS) < n as f64 {
                for off in [0.0, 0.11] {
                    let at = ((t + off) * FS) as usize;
                    burst(&mut out, at, 0.02, rng.gen_range(300.0..1500.0), 1.0, 4.0, rng);
                }
                t += rng.gen_range(0.8..1.0);
            }
            for at in events(n, 0.12 * v, rng) {
                let f = rng.gen_range(2500.0..4000.0);
                chirp(&mut out, at, rng.gen_range(0.5..1.5), f, f * rng.gen_range(0.95..1.05), 0.4, 0.2);
            }
        }
        "Birds_Park" => {
            let mut talk = babble(n, 0.3, rng);
            normalize_rms(&mut talk, 0.3);
            add(&mut out, &talk, 1.0);
            let mut leaves = filtered(&pink(n, rng), 2000.0, 0.5);
            normalize_rms(&mut leaves, 0.4);
            modulate(&mut leaves, 0.2, 0.5, rng);
            add(&mut out, &leaves, 1.0);
            for at in events(n, 0.7 * v, rng) {
                let notes = rng.gen_range(2..8);
                let mut t = at;
                let base = rng.gen_range(2000.0..6000.0);
                let amp = rng.gen_range(0.5..3.0);
                for _ in 0..notes {
                    let len = rng.gen_range(0.03..0.15);
                    let f1 = base * rng.gen_range(0.8..1.2);
                    let f2 = f1 * rng.gen_range(0.6..1.6);
                    chirp(&mut out, t, len, f1, f2.min(7500.0), amp, 0.2);
                    t += ((len + rng.gen_range(0.02..0.1)) * FS) as usize;
                }
            }
        }
        "Cafe_Dishes" => {
            let mut talk = babble(n, 3.0, rng);
            normalize_rms(&mut talk, 0.8);
            add(&mut out, &talk, 1.0);
            let mut room = pink(n, rng);
            normalize_rms(&mut room, 1.0);
            add(&mut out, &room, 1.0);
            for at in events(n, 1.0 * v, rng) {
                ping(
                    &mut out,
                    at,
                    rng.gen_range(0.05..0.2),
                    rng.gen_range(2000.0..6000.0),
                    0.0 + rng.gen_range(2000.0..6000.0),
                    rng.gen_range(1.0..6.0),
                );
            }
        }
        "Keyboard_Typing" => {
            let mut hiss = pink(n, rng);
            normalize_rms(&mut hiss, 0.2);
            add(&mut out, &hiss, 1.0);
            for at in events(n, 6.0 * v, rng) {
                burst(&mut out, at, 0.004, rng.gen_range(1000.0..5000.0), 1.5, rng.gen_range(1.0..3.0), rng);
            }
        }
        "Construction_Site" => {
            let mut bg = brown(n, rng);
            normalize_rms(&mut bg, 1.0);
            add(&mut out, &bg, 1.0);
            for at in events(n, 1.2 * v, rng) {
                burst(&mut out, at, 0.06, rng.gen_range(200.0..2000.0), 0.7, rng.gen_range(4.0..12.0), rng);
            }
            for at in events(n, 0.08 * v, rng) {
                let len = (rng.gen_range(1.0..3.0) * FS) as usize;
                harmonic_tone(&mut out, at, (at + len).min(n), rng.gen_range(120.0..200.0), 25, 0.4);
            }
        }
        "Wind_Gusts" => {
            let mut w = filtered(&brown(n, rng), 400.0, 0.4);
            normalize_rms(&mut w, 1.0);
            modulate(&mut w, 0.1, 0.8, rng);
            add(&mut out, &w, 1.0);
            for at in events(n, 0.3 * v, rng) {
                burst(&mut out, at, 0.01, rng.gen_range(1500.0..4000.0), 1.0, rng.gen_range(4.0..10.0), rng);
            }
        }
        "Water_Drips" => {
            let mut hiss = pink(n, rng);
            normalize_rms(&mut hiss, 0.3);
            add(&mut out, &hiss, 1.0);
            for at in events(n, 1.5 * v, rng) {
                let f = rng.gen_range(800.0..1500.0);
                ping(&mut out, at, rng.gen_range(0.03..0.08), f, f * rng.gen_range(1.3..2.0), rng.gen_range(2.0..6.0));
            }
        }
        "Insects_Night" => {
            let mut bg = pink(n, rng);
            normalize_rms(&mut bg, 0.2);
            add(&mut out, &bg, 1.0);
            let carrier = rng.gen_range(4000.0..5000.0);
            let mut t = 0.0;
            while ((t + 0.2) * FS) < n as f64 {
                for k in 0..3 {
                    let at = ((t + k as f64 * 0.033) * FS) as usize;
                    chirp(&mut out, at, 0.02, carrier, carrier, 0.8, 0.0);
                }
                t += rng.gen_range(0.3..0.6);
            }
            for at in events(n, 0.5 * v, rng) {
                let f0 = rng.gen_range(150.0..400.0);
                let len = rng.gen_range(0.1..0.3);
                harmonic_tone(&mut out, at, (at + (len * FS) as usize).min(n), f0, 10, rng.gen_range(0.3..1.2));
            }
        }
        "Machinery_Clank" => {
            harmonic_tone(&mut out, 0, n, 50.0, 20, 0.3);
            let mut bg = brown(n, rng);
            normalize_rms(&mut bg, 0.4);
            add(&mut out, &bg, 1.0);
            let mut t = 0.3;
            while (t * FS) < n as f64 {
                burst(
                    &mut out,
                    (t * FS) as usize,
                    0.03,
                    rng.gen_range(500.0..3000.0),
                    1.2,
                    rng.gen_range(3.0..8.0),
                    rng,
                );
                t += rng.gen_range(1.2..1.6);
            }
        }
        "Rain_Roof" => {
            let mut bg = filtered(&pink(n, rng), 1200.0, 0.5);
            normalize_rms(&mut bg, 0.6);
            add(&mut out, &bg, 1.0);
            for at in events(n, 25.0 * v, rng) {
                burst(
                    &mut out,
                    at,
                    rng.gen_range(0.005..0.02),
                    rng.gen_range(500.0..3000.0),
                    1.5,
                    3.0 * (rng.gen_range(-2.0f64..1.0)).exp(),
                    rng,
                );
            }
        }
        "Engine_Idle" => {
            let f0 = rng.gen_range(25.0..35.0);
            let mut t = 0.0;
            while (t * FS) < n as f64 {
                burst(
                    &mut out,
                    (t * FS) as usize,
                    0.02,
                    rng.gen_range(150.0..400.0),
                    1.0,
                    rng.gen_range(0.8..1.2),
                    rng,
                );
                t += 1.0 / f0;
            }
            harmonic_tone(&mut out, 0, n, 2.0 * f0, 30, 0.1);
        }
        "Office_Chatter" => {
            let mut hvac = pink(n, rng);
            normalize_rms(&mut hvac, 0.3);
            add(&mut out, &hvac, 1.0);
            let mut talk = babble(n, 2.0 * v, rng);
            normalize_rms(&mut talk, 0.7);
            add(&mut out, &talk, 1.0);
            for at in events(n, 3.0 * v, rng) {
                burst(&mut out, at, 0.004, rng.gen_range(1000.0..5000.0), 1.5, rng.gen_range(0.5..2.0), rng);
            }
            for at in events(n, 0.05 * v, rng) {
                for k in 0..4 {
                    let f = if k % 2 == 0 { 1400.0 } else { 1750.0 };
                    chirp(&mut out, at + k * 1600, 0.08, f, f, 1.0, 0.3);
                }
            }
        }
        "Fan_Hum" => {
            harmonic_tone(&mut out, 0, n, 60.0, 10, 0.5);
            let mut air = pink(n, rng);
            normalize_rms(&mut air, 0.5);
            add(&mut out, &air, 1.0);
        }
        "Chimes_Short" => {
            for at in events(n, 1.0 * v, rng) {
                let f = rng.gen_range(800.0..2500.0);
                ping(&mut out, at, 0.8, f, f, 2.0);
            }
            let mut air = pink(n, rng);
            normalize_rms(&mut air, 0.05);
            add(&mut out, &air, 1.0);
        }
        other => panic!("no scene named {other}"),
    }
    out
}

/// Scene family of a file name: `Cafe_Dishes_2` belongs to `Cafe_Dishes`.
fn family(name: &str) -> &str {
    match name.rsplit_once('_') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => name,
    }
}

/// Renders a named noise scene of `secs` seconds, peak-normalised to 0.9.
/// Numbered variants of a family (`Name_k`) draw their event rates from
/// the seed. Training scenes get one extra transient if needed so their
/// crest factor clears 25 dB with margin.
pub fn synthesize_noise(name: &str, secs: f64, seed: u64) -> AudioClip {
    let n = (secs * FS) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fam = family(name);
    let v = if fam != name { rng.gen_range(0.5f64..2.0) } else { 1.0 };
    let mut s = scene(fam, n, v, &mut rng);
    if TRAINING_NOISES.contains(&fam) {
        let target = 10f64.powf(27.0 / 20.0) * rms(&s);
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak < target {
            let at = rng.gen_range(n / 4..3 * n / 4);
            let mut click = vec![0.0; (0.003 * FS) as usize];
            burst(&mut click, 0, 0.003, 3000.0, 0.7, 1.0, &mut rng);
            let cp = click.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            add(&mut s[at..at + click.len()], &click, 1.2 * target / cp);
        }
    }
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    s.iter_mut().for_each(|v| *v *= 0.9 / peak);
    AudioClip::new(s)
}

fn name_seed(root: u64, name: &str) -> u64 {
    name.bytes().fold(root ^ 0x9e37_79b9_7f4a_7c15, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Writes the full synthetic source set.
pub fn write_synthetic_sources(
    noise_dir: &Path,
    speech_dir: &Path,
    cfg: &SourceConfig,
) -> Result<SourceSummary, CorpusError> {
    std::fs::create_dir_all(noise_dir)?;
    std::fs::create_dir_all(speech_dir)?;
    let mut noises = Vec::new();
    let mut names: Vec<String> = TEST_NOISES.iter().filter(|n| **n != WHITE).map(|n| n.to_string()).collect();
    for fam in TRAINING_NOISES {
        names.extend((1..=cfg.noise_variants.max(1)).map(|k| format!("{fam}_{k}")));
    }
    names.extend(REJECTED_NOISES.iter().map(|n| n.to_string()));
    for name in &names {
        let secs = if name == "Chimes_Short" { cfg.noise_secs.min(20.0) } else { cfg.noise_secs };
        let clip = synthesize_noise(name, secs, name_seed(cfg.seed, name));
        write_wav(&noise_dir.join(format!("{name}.wav")), &clip)?;
        noises.push((name.to_string(), clip.duration_secs(), crest_factor(&clip)?));
    }
    let mut utterances = 0;
    let phrases: Vec<&str> = TEST_PHRASES.iter().chain(&TRAINING_PHRASES).copied().collect();
    for phrase in &phrases {
        let dir = speech_dir.join(phrase);
        std::fs::create_dir_all(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(cfg.seed, phrase));
        for k in 0..cfg.utterances_per_phrase {
            let clip = synthesize_utterance(phrase, &mut rng);
            let speaker: u32 = rng.gen();
            write_wav(&dir.join(format!("{speaker:08x}_nohash_{k}.wav")), &clip)?;
            utterances += 1;
        }
    }
    Ok(SourceSummary { phrases: phrases.len(), utterances, noises })
}
