use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::{FrameSeq, ModelKind, ModelParams, Network};

const KINK_MARGIN: f64 = 1e-3;

fn toy_example(rng: &mut ChaCha8Rng, dim: usize, len: usize, speech: bool) -> LabeledSequence {
    let mut frames = FrameSeq::new(dim);
    for _ in 0..len {
        let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect();
        frames.push(&f);
    }
    let start = if speech { Some(len - 3) } else { None };
    LabeledSequence::new(frames, start, 1).unwrap()
}

fn loss_of(params: &ModelParams, ex: &LabeledSequence, kind: LossKind) -> f64 {
    dataset_loss(params, std::slice::from_ref(ex), kind).unwrap()
}

/// Whether the forward pass stays clear of hard-activation kinks and of
/// max-pooling argmax ties.
fn well_conditioned(params: &ModelParams, ex: &LabeledSequence) -> bool {
    let net = Network::new(params).unwrap();
    let far = |a: &[f64], kinks: &[f64]| a.iter().all(|v| kinks.iter().all(|k| (v - k).abs() > KINK_MARGIN));
    let mut h = vec![0.0; params.hidden_dim];
    let mut logits = Vec::new();
    if params.kind.is_recurrent() {
        for t in 0..ex.frames.len() {
            let tape = net.step_taped(&h, ex.frames.frame(t)).unwrap();
            if !far(&tape.a_f, &[-2.0, 2.0]) || !far(&tape.a_r, &[-2.0, 2.0]) || !far(&tape.a_c, &[-1.0, 1.0]) {
                return false;
            }
            h = tape.h.clone();
            logits.push(tape.logit);
        }
    } else {
        for t in 0..ex.frames.len() {
            let tape = net.mlp_taped(ex.frames.frame(t)).unwrap();
            if tape.pre.iter().any(|a| !far(a, &[-1.0, 1.0])) {
                return false;
            }
            logits.push(tape.logit);
        }
    }
    for set in [&ex.noise, &ex.speech] {
        let mut v: Vec<f64> = set.iter().map(|&t| logits[t]).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.len() > 1 && v[0] - v[1] < KINK_MARGIN {
            return false;
        }
    }
    true
}

/// Largest relative deviation between analytic and central-difference
/// gradients, `|g - fd| / (max(|g|, |fd|) + 1e-8)`.
fn max_relative_error(params: &ModelParams, ex: &LabeledSequence, kind: LossKind) -> f64 {
    let (_, grads) = bptt_gradients(params, ex, kind).unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for (m, g) in grads.iter().enumerate() {
        for i in 0..g.data.len() {
            let mut plus = params.clone();
            plus.matrices[m].latent.data[i] += step;
            let mut minus = params.clone();
            minus.matrices[m].latent.data[i] -= step;
            let fd = (loss_of(&plus, ex, kind) - loss_of(&minus, ex, kind)) / (2.0 * step);
            let a = g.data[i];
            worst = worst.max((a - fd).abs() / (a.abs().max(fd.abs()) + 1e-8));
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [ModelKind::Tanh, ModelKind::Mgu, ModelKind::Gru] {
        for loss in [LossKind::Bce, LossKind::MaxPool] {
            let mut checked = 0;
            while checked < 6 {
                let params = ModelParams::random(kind, 3, 4, &mut rng);
                let speech = rng.gen_bool(0.7);
                let ex = toy_example(&mut rng, 3, 8, speech);
                if !well_conditioned(&params, &ex) {
                    continue;
                }
                let err = max_relative_error(&params, &ex, loss);
                assert!(err < 1e-4, "{kind} {loss:?}: relative error {err}");
                checked += 1;
            }
        }
    }
}

#[test]
fn mlp_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = ModelParams::random(ModelKind::Mlp, 3, 0, &mut rng);
    let ex = toy_example(&mut rng, 3, 6, true);
    assert!(well_conditioned(&params, &ex));
    assert!(max_relative_error(&params, &ex, LossKind::Bce) < 1e-4);
}

#[test]
fn max_pool_gradient_flows_through_one_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut params = ModelParams::random(ModelKind::Mgu, 3, 4, &mut rng);
    for m in &mut params.matrices {
        if m.name != "w_out" {
            m.latent.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    // Hidden state is zero, so the only nonzero logit gradient sits on the
    // first frame (argmax of equal scores takes the first index).
    let ex = toy_example(&mut rng, 3, 10, false);
    let net = Network::new(&params).unwrap();
    let track = net.run_sequence(&ex.frames).unwrap();
    let (_, dz) = loss_and_logit_grad(LossKind::MaxPool, &track.logits, &ex.noise, &ex.speech).unwrap();
    assert_eq!(dz.iter().filter(|&&g| g != 0.0).count(), 1);
    assert!(dz[0] > 0.0);
}

#[test]
fn zero_model_output_gradient_uses_argmax_frame_only() {
    let params = ModelParams::zeros(ModelKind::Gru, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let ex = toy_example(&mut rng, 3, 10, false);
    let (_, g) = bptt_gradients(&params, &ex, LossKind::MaxPool).unwrap();
    // h stays at zero, so even the argmax frame contributes nothing.
    assert!(g.iter().all(|m| m.data.iter().all(|&v| v == 0.0)));
}

fn toy_set(seed: u64, n: usize) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let speech = i % 2 == 0;
            let mut ex = toy_example(&mut rng, 3, 12, speech);
            if speech {
                for t in 9..12 {
                    ex.frames.data[t * 3] += 1.0;
                }
            }
            ex
        })
        .collect()
}

#[test]
fn loss_decreases_over_full_batch_steps() {
    let set = toy_set(15, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut params = ModelParams::random(ModelKind::Mgu, 3, 4, &mut rng);
    let cfg = TrainConfig { learning_rate: 0.02, ..TrainConfig::default() };
    let mut adam = Adam::new(&params, &cfg);
    let before = dataset_loss(&params, &set, LossKind::Bce).unwrap();
    for _ in 0..10 {
        let mut acc: Option<Gradients> = None;
        for ex in &set {
            let (_, g) = bptt_gradients(&params, ex, LossKind::Bce).unwrap();
            match &mut acc {
                None => acc = Some(g),
                Some(a) => a.iter_mut().zip(&g).for_each(|(x, y)| {
                    x.data.iter_mut().zip(&y.data).for_each(|(p, q)| *p += q);
                }),
            }
        }
        adam.step(&mut params, &acc.unwrap());
    }
    let after = dataset_loss(&params, &set, LossKind::Bce).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn zero_learning_rate_keeps_params() {
    let set = toy_set(17, 6);
    let params = ModelParams::random(ModelKind::Gru, 3, 4, &mut ChaCha8Rng::seed_from_u64(18));
    let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 3, ..TrainConfig::default() };
    let (out, hist) = train(&params, &set, &set, &cfg).unwrap();
    assert_eq!(out.matrices, params.matrices);
    assert_eq!(hist.best_epoch, 0);
}

#[test]
fn training_is_deterministic_and_restores_best_epoch() {
    let set = toy_set(19, 12);
    let val = toy_set(20, 6);
    let params = ModelParams::random(ModelKind::Mgu, 3, 4, &mut ChaCha8Rng::seed_from_u64(21));
    let cfg = TrainConfig {
        learning_rate: 0.05,
        max_epochs: 40,
        patience: 3,
        batch_size: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let (a, ha) = train(&params, &set, &val, &cfg).unwrap();
    let (b, hb) = train(&params, &set, &val, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let best = ha.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    if ha.best_epoch > 0 {
        assert_eq!(best, ha.best_val_loss);
        assert_eq!(dataset_loss(&a, &val, LossKind::MaxPool).unwrap(), best);
    }
    assert!(ha.best_epoch <= ha.epochs.len());
}

#[test]
fn level_one_forward_quantizes_tanh_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut params = ModelParams::random(ModelKind::Mgu, 3, 4, &mut rng);
    params.quant.level = 1;
    let eff = params.effective();
    for (m, e) in params.matrices.iter().zip(&eff.mats) {
        let bounded: Vec<f64> = m.latent.data.iter().map(|v| v.tanh()).collect();
        assert_eq!(crate::quant::quantize_weights(&bounded, 4).0, e.data);
    }
}

#[test]
fn schedule_enforces_order_and_freezes_weights() {
    let set = toy_set(23, 4);
    let p0 = ModelParams::random(ModelKind::Mgu, 3, 4, &mut ChaCha8Rng::seed_from_u64(24));
    let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    assert!(matches!(
        quantization_schedule(2, &p0, &set, &set, &cfg),
        Err(TrainError::SkippedLevel { from: 0, to: 2 })
    ));
    let (p1, h) = quantization_schedule(1, &p0, &set, &set, &cfg).unwrap();
    assert!(h.is_some());
    assert_eq!(p1.quant.level, 1);
    assert!(matches!(quantization_schedule(1, &p1, &set, &set, &cfg), Err(TrainError::SkippedLevel { .. })));
    let (p2, h) = quantization_schedule(2, &p1, &set, &set, &cfg).unwrap();
    assert!(h.is_none());
    assert_eq!(p2.quant.level, 2);
    assert_eq!(p2.matrices, p1.matrices);
    assert_eq!(p2.effective().mats, p1.effective().mats);
}

#[test]
fn level_two_is_not_trainable() {
    let set = toy_set(25, 2);
    let mut p = ModelParams::random(ModelKind::Mgu, 3, 4, &mut ChaCha8Rng::seed_from_u64(26));
    p.quant.level = 2;
    assert!(matches!(bptt_gradients(&p, &set[0], LossKind::Bce), Err(TrainError::QuantizedActivations)));
}
