//! Integer inference engine for level-2 recurrent models.
//!
//! Every quantity is kept as an integer numerator over a fixed
//! denominator, so the engine is exact:
//!
//! * weight `w = c·m / (L·S)` with code `c`, per-matrix θ code `m`
//! * input `x = a / A`, hidden state `h = p / S`, gate `f = q / L`
//!
//! where `S = 2^(k-1) - 1`, `L = 2^k - 1` and `A = 2^b - 1` for `b` ADC
//! bits. Pre-activations are compared and rounded as exact rationals,
//! which reproduces the float level-2 forward pass bit for bit.

use serde::{Deserialize, Serialize};

use super::{signed_levels, unsigned_levels, QuantError, QuantSpec};
use crate::models::{matrix_shapes, slots, EffectiveWeights, Matrix, ModelKind, ModelParams, Slots};

/// Largest hidden size for which the i64 accumulators are proven safe.
pub const MAX_HIDDEN: usize = 64;
pub const MAX_BITS: u32 = 8;
pub const MAX_INPUT_BITS: u32 = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// θ on its own grid, `θ = theta_code / (2^k - 1)`.
    pub theta_code: i64,
    /// Row-major codes in `[-(2^(k-1)-1), 2^(k-1)-1]`.
    pub codes: Vec<i64>,
}

impl FixedMatrix {
    #[inline]
    fn row(&self, r: usize) -> &[i64] {
        &self.codes[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn dot(&self, r: usize, v: &[i64]) -> i64 {
        self.row(r).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub bits: u32,
    pub input_bits: u32,
    pub matrices: Vec<FixedMatrix>,
}

/// `num / den` rounded half away from zero, `den > 0`.
#[inline]
pub fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

impl FixedPointModel {
    /// Converts level-2 parameters of a recurrent model.
    pub fn from_params(params: &ModelParams) -> Result<Self, QuantError> {
        params.validate()?;
        if params.quant.level != 2 {
            return Err(QuantError::NotLevel2(params.quant.level));
        }
        let eff = params.effective();
        let specs: Vec<QuantSpec> = eff.specs.iter().map(|s| s.expect("level 2 has specs")).collect();
        let matrices = params
            .matrices
            .iter()
            .zip(&specs)
            .map(|(m, spec)| FixedMatrix {
                name: m.name.clone(),
                rows: m.latent.rows,
                cols: m.latent.cols,
                theta_code: spec.theta_code,
                codes: m.latent.data.iter().map(|v| spec.code(v.tanh())).collect(),
            })
            .collect();
        let model = FixedPointModel {
            kind: params.kind,
            input_dim: params.input_dim,
            hidden_dim: params.hidden_dim,
            bits: params.quant.bits,
            input_bits: params.quant.input_bits,
            matrices,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        if !self.kind.is_recurrent() {
            return Err(QuantError::NotRecurrent(self.kind));
        }
        if self.hidden_dim == 0 || self.hidden_dim > MAX_HIDDEN {
            return Err(QuantError::Unsupported(format!("hidden size {} (1..={MAX_HIDDEN})", self.hidden_dim)));
        }
        if !(3..=MAX_BITS).contains(&self.bits) {
            return Err(QuantError::Unsupported(format!("{} weight bits (3..={MAX_BITS})", self.bits)));
        }
        if !(1..=MAX_INPUT_BITS).contains(&self.input_bits) {
            return Err(QuantError::Unsupported(format!("{} input bits (1..={MAX_INPUT_BITS})", self.input_bits)));
        }
        let shapes = matrix_shapes(self.kind, self.input_dim, self.hidden_dim);
        if shapes.len() != self.matrices.len() {
            return Err(QuantError::Format(format!("expected {} matrices", shapes.len())));
        }
        let s = self.s();
        for ((name, r, c), m) in shapes.iter().zip(&self.matrices) {
            if m.name != *name || m.rows != *r || m.cols != *c || m.codes.len() != r * c {
                return Err(QuantError::Format(format!("matrix {} does not fit {name} {r}x{c}", m.name)));
            }
            if m.codes.iter().any(|v| v.abs() > s) {
                return Err(QuantError::Format(format!("matrix {} has a code outside ±{s}", m.name)));
            }
            // |w| < 1, so θ never needs to exceed 3 for 3σ clipping.
            if m.theta_code < 0 || m.theta_code > 3 * self.l() {
                return Err(QuantError::Format(format!("matrix {} has θ code {}", m.name, m.theta_code)));
            }
        }
        Ok(())
    }

    #[inline]
    fn s(&self) -> i64 {
        signed_levels(self.bits)
    }

    #[inline]
    fn l(&self) -> i64 {
        unsigned_levels(self.bits)
    }

    #[inline]
    fn a(&self) -> i64 {
        unsigned_levels(self.input_bits)
    }

    fn slots(&self) -> Slots {
        slots(self.kind)
    }

    pub fn num_weights(&self) -> usize {
        self.matrices.iter().map(|m| m.codes.len()).sum()
    }

    /// Float weights the codes stand for.
    pub fn dequantize(&self) -> EffectiveWeights {
        let mut mats = Vec::new();
        let mut specs = Vec::new();
        for m in &self.matrices {
            let spec = QuantSpec { bits: self.bits, theta_code: m.theta_code };
            mats.push(Matrix { rows: m.rows, cols: m.cols, data: m.codes.iter().map(|&c| spec.value(c)).collect() });
            specs.push(Some(spec));
        }
        EffectiveWeights { mats, specs }
    }

    pub fn zero_state(&self) -> Vec<i64> {
        vec![0; self.hidden_dim]
    }

    /// ADC codes of a feature frame.
    pub fn input_codes(&self, x: &[f64]) -> Vec<i64> {
        let a = self.a() as f64;
        x.iter().map(|&v| (v.clamp(0.0, 1.0) * a).round() as i64).collect()
    }

    /// Gate codes `q` of `hard_sigmoid_qtz(W_h h + W_x x)`.
    fn gate(&self, hm: usize, xm: usize, p: &[i64], a: &[i64]) -> Vec<i64> {
        let (s, l, aa) = (self.s() as i128, self.l() as i128, self.a() as i128);
        let (wh, wx) = (&self.matrices[hm], &self.matrices[xm]);
        let den = l * s * s * aa;
        (0..self.hidden_dim)
            .map(|i| {
                let n = wh.theta_code as i128 * aa * wh.dot(i, p) as i128
                    + wx.theta_code as i128 * s * wx.dot(i, a) as i128;
                div_round((n + 2 * den) * l, 4 * den).clamp(0, l) as i64
            })
            .collect()
    }

    /// Candidate codes of `hard_tanh_qtz(W_hh g + W_hx x)` where the gated
    /// state `g = (q/L)·(p/S)` is kept exact.
    fn candidate(&self, gp: &[i64], gate_scale: i64, a: &[i64], hh: usize, hx: usize) -> Vec<i64> {
        let (s, l, aa, gs) = (self.s() as i128, self.l() as i128, self.a() as i128, gate_scale as i128);
        let (wh, wx) = (&self.matrices[hh], &self.matrices[hx]);
        // g = gp / (S·gs); w = c·m / (L·S); x = a / A
        let den = l * s * s * gs * aa;
        (0..self.hidden_dim)
            .map(|i| {
                let n = wh.theta_code as i128 * aa * wh.dot(i, gp) as i128
                    + wx.theta_code as i128 * s * gs * wx.dot(i, a) as i128;
                div_round(n * s, den).clamp(-s, s) as i64
            })
            .collect()
    }

    /// One cell update on integer codes.
    pub fn step(&self, p: &[i64], a: &[i64]) -> Vec<i64> {
        assert_eq!(p.len(), self.hidden_dim, "hidden width");
        assert_eq!(a.len(), self.input_dim, "input width");
        let sl = self.slots();
        let l = self.l();
        match self.kind {
            ModelKind::Tanh => self.candidate(p, 1, a, sl.hh, sl.hx),
            ModelKind::Mgu | ModelKind::Gru => {
                let f = self.gate(sl.fh.unwrap(), sl.fx.unwrap(), p, a);
                let r = if self.kind == ModelKind::Gru {
                    self.gate(sl.rh.unwrap(), sl.rx.unwrap(), p, a)
                } else {
                    f.clone()
                };
                let gp: Vec<i64> = r.iter().zip(p).map(|(q, p)| q * p).collect();
                let c = self.candidate(&gp, l, a, sl.hh, sl.hx);
                (0..self.hidden_dim)
                    .map(|i| div_round(((l - f[i]) * p[i] + f[i] * c[i]) as i128, l as i128) as i64)
                    .collect()
            }
            ModelKind::Mlp | ModelKind::Cmlp => unreachable!("validated as recurrent"),
        }
    }

    /// Integer logit `Z`; the real logit is `Z · logit_scale()`.
    pub fn logit_code(&self, p: &[i64]) -> i64 {
        let out = &self.matrices[self.slots().out];
        out.theta_code * out.dot(0, p)
    }

    pub fn logit_scale(&self) -> f64 {
        1.0 / (self.l() * self.s() * self.s()) as f64
    }

    /// Smallest integer logit `Z` with `Z / D >= t` in f64, `D = L·S²`, so
    /// that integer decisions agree with float comparisons of the level-2
    /// logit.
    pub fn threshold_code(&self, logit_threshold: f64) -> i64 {
        let d = (self.l() * self.s() * self.s()) as f64;
        let bound = 1i64 << 52;
        let mut c = (logit_threshold * d).ceil().clamp(-(bound as f64), bound as f64) as i64;
        while c > -bound && (c - 1) as f64 / d >= logit_threshold {
            c -= 1;
        }
        while c < bound && (c as f64 / d) < logit_threshold {
            c += 1;
        }
        c
    }

    pub fn decide(&self, p: &[i64], threshold_code: i64) -> bool {
        self.logit_code(p) >= threshold_code
    }

    /// Integer logits of a sequence of feature frames from the zero state.
    pub fn run(&self, frames: &crate::models::FrameSeq) -> Vec<i64> {
        let mut p = self.zero_state();
        (0..frames.len())
            .map(|t| {
                p = self.step(&p, &self.input_codes(frames.frame(t)));
                self.logit_code(&p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HiddenState, Network};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level2(
        kind: ModelKind,
        input: usize,
        hidden: usize,
        bits: u32,
        input_bits: u32,
        spread: f64,
        seed: u64,
    ) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::random(kind, input, hidden, &mut rng);
        for m in &mut p.matrices {
            m.latent.data.iter_mut().for_each(|v| *v *= spread);
        }
        p.quant.level = 2;
        p.quant.bits = bits;
        p.quant.input_bits = input_bits;
        p
    }

    #[test]
    fn rounding_helper() {
        assert_eq!(div_round(15, 2), 8);
        assert_eq!(div_round(-15, 2), -8);
        assert_eq!(div_round(14, 4), 4);
        assert_eq!(div_round(13, 4), 3);
        assert_eq!(div_round(-13, 4), -3);
        assert_eq!(div_round(0, 7), 0);
    }

    #[test]
    fn rejects_non_level2_and_dense() {
        let mut p = level2(ModelKind::Mgu, 17, 16, 4, 8, 1.0, 1);
        p.quant.level = 1;
        assert!(matches!(FixedPointModel::from_params(&p), Err(QuantError::NotLevel2(1))));
        let mut d = ModelParams::zeros(ModelKind::Mlp, 17, 0);
        d.quant.level = 2;
        assert!(FixedPointModel::from_params(&d).is_err());
    }

    #[test]
    fn dequantize_reproduces_level2_weights() {
        let p = level2(ModelKind::Gru, 17, 16, 4, 8, 2.0, 2);
        let fx = FixedPointModel::from_params(&p).unwrap();
        assert_eq!(fx.dequantize(), p.effective());
        assert_eq!(fx.num_weights(), 1600);
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let fx = FixedPointModel::from_params(&level2(ModelKind::Mgu, 17, 16, 4, 8, 2.0, 3)).unwrap();
        let mut p = fx.zero_state();
        for _ in 0..20 {
            p = fx.step(&p, &[0; 17]);
        }
        assert!(p.iter().all(|&v| v == 0));
    }

    #[test]
    fn matches_float_model_on_random_steps() {
        for kind in [ModelKind::Tanh, ModelKind::Mgu, ModelKind::Gru] {
            for bits in [3, 4, 5, 6] {
                let params = level2(kind, 17, 16, bits, 8, 3.0, bits as u64);
                let net = Network::new(&params).unwrap();
                let fx = FixedPointModel::from_params(&params).unwrap();
                let s = signed_levels(bits) as f64;
                let mut rng = ChaCha8Rng::seed_from_u64(40 + bits as u64);
                let mut h = HiddenState::zeros(16);
                let mut p = fx.zero_state();
                for _ in 0..2_000 {
                    let x: Vec<f64> = (0..17).map(|_| rng.gen_range(-0.1..1.1)).collect();
                    h = net.cell_step(&h, &x).unwrap();
                    p = fx.step(&p, &fx.input_codes(&x));
                    for (hf, pi) in h.h.iter().zip(&p) {
                        assert_eq!(*hf, *pi as f64 / s, "{kind} k={bits}");
                    }
                    let z = net.logit(&h);
                    assert!((z - fx.logit_code(&p) as f64 * fx.logit_scale()).abs() < 1e-9);
                }
            }
        }
    }
}
