//! Integer engine against the float level-2 forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wus_core::models::{HiddenState, ModelKind, ModelParams, Network};
use wus_core::quant::{signed_levels, FixedPointModel};

fn level2(
    kind: ModelKind,
    input: usize,
    hidden: usize,
    bits: u32,
    input_bits: u32,
    rng: &mut ChaCha8Rng,
) -> ModelParams {
    let spread = rng.gen_range(0.5..4.0);
    let mut p = ModelParams::random(kind, input, hidden, rng);
    for m in &mut p.matrices {
        m.latent.data.iter_mut().for_each(|v| *v *= spread);
    }
    p.quant.level = 2;
    p.quant.bits = bits;
    p.quant.input_bits = input_bits;
    p
}

const THRESHOLDS: [f64; 5] = [-1.0, -0.25, 0.0, 0.3, 1.2];

/// Steps both engines once from the same grid state; returns mismatches.
fn compare_step(net: &Network, fx: &FixedPointModel, p: &[i64], x: &[f64]) -> (Vec<i64>, usize) {
    let s = signed_levels(fx.bits) as f64;
    let h = HiddenState { h: p.iter().map(|&v| v as f64 / s).collect() };
    let hf = net.cell_step(&h, x).unwrap();
    let pn = fx.step(p, &fx.input_codes(x));
    let mut bad = hf.h.iter().zip(&pn).filter(|(a, b)| **a != **b as f64 / s).count();
    let z = net.logit(&hf);
    for t in THRESHOLDS {
        if (z >= t) != fx.decide(&pn, fx.threshold_code(t)) {
            bad += 1;
        }
    }
    (pn, bad)
}

#[test]
fn exhaustive_small_grid() {
    // k = 3, two hidden units, two 3-bit inputs: every hidden state and
    // every input code, for several weight draws and all cell kinds.
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (bits, input_bits) = (3, 3);
    let s = signed_levels(bits);
    let a_max = (1i64 << input_bits) - 1;
    let mut steps = 0;
    for kind in [ModelKind::Tanh, ModelKind::Mgu, ModelKind::Gru] {
        for _ in 0..20 {
            let params = level2(kind, 2, 2, bits, input_bits, &mut rng);
            let net = Network::new(&params).unwrap();
            let fx = FixedPointModel::from_params(&params).unwrap();
            for p0 in -s..=s {
                for p1 in -s..=s {
                    for a0 in 0..=a_max {
                        for a1 in 0..=a_max {
                            let x = [a0 as f64 / a_max as f64, a1 as f64 / a_max as f64];
                            let (_, bad) = compare_step(&net, &fx, &[p0, p1], &x);
                            assert_eq!(bad, 0, "{kind} p=({p0},{p1}) a=({a0},{a1})");
                            steps += 1;
                        }
                    }
                }
            }
        }
    }
    assert_eq!(steps, 3 * 20 * 49 * 64);
}

#[test]
fn random_sequences_mgu16() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..10 {
        let params = level2(ModelKind::Mgu, 17, 16, 4, 8, &mut rng);
        let net = Network::new(&params).unwrap();
        let fx = FixedPointModel::from_params(&params).unwrap();
        let mut p = fx.zero_state();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..17).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (pn, bad) = compare_step(&net, &fx, &p, &x);
            mismatches += bad;
            p = pn;
        }
    }
    assert_eq!(mismatches, 0);
}
