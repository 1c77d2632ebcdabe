use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_seq(rng: &mut ChaCha8Rng, dim: usize, len: usize) -> FrameSeq {
    let mut seq = FrameSeq::new(dim);
    for _ in 0..len {
        let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        seq.push(&f);
    }
    seq
}

#[test]
fn weight_counts_match_architectures() {
    let count = |k: ModelKind| ModelParams::zeros(k, model_input_dim(k, 17), 16).num_weights();
    assert_eq!(count(ModelKind::Tanh), 544);
    assert_eq!(count(ModelKind::Mgu), 1_072);
    assert_eq!(count(ModelKind::Gru), 1_600);
    assert_eq!(count(ModelKind::Mlp), 17 * 60 + 60 * 24 + 24 * 11 + 11);
    assert_eq!(count(ModelKind::Mlp), 2_735);
    assert_eq!(count(ModelKind::Cmlp), 4_775);
}

#[test]
fn gru_zero_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ModelParams::random(ModelKind::Gru, 17, 16, &mut rng);
    let net = Network::new(&params).unwrap();
    let h = net.cell_step(&HiddenState::zeros(16), &[0.0; 17]).unwrap();
    assert!(h.h.iter().all(|&v| v == 0.0));
}

#[test]
fn mgu_zero_weights_stay_at_zero() {
    let net = Network::new(&ModelParams::zeros(ModelKind::Mgu, 17, 16)).unwrap();
    let x: Vec<f64> = (0..17).map(|i| i as f64 * 0.1).collect();
    let h = net.cell_step(&HiddenState::zeros(16), &x).unwrap();
    assert!(h.h.iter().all(|&v| v == 0.0));
}

#[test]
fn mgu_hand_evaluated_gate_example() {
    // f = (hs(4), hs(-4)) = (1, 0); candidate pre-activation W_hh (f*h) + 0.5
    let n_in = 17;
    let per = |total: f64| vec![total / n_in as f64; n_in];
    let mut w_fx = per(4.0);
    w_fx.extend(per(-4.0));
    let mut w_hx = per(0.5);
    w_hx.extend(per(0.5));
    for (w_hh, expected0) in [(vec![0.0, 0.0, 0.0, 0.0], 0.5), (vec![0.2, 0.0, 0.0, 0.2], 0.2 * 0.3 + 0.5)] {
        let params = ModelParams::from_effective(
            ModelKind::Mgu,
            n_in,
            2,
            &[("w_fx", w_fx.clone()), ("w_hx", w_hx.clone()), ("w_hh", w_hh)],
        )
        .unwrap();
        let net = Network::new(&params).unwrap();
        let h = net.cell_step(&HiddenState { h: vec![0.3, 0.3] }, &vec![1.0; n_in]).unwrap();
        assert!((h.h[0] - expected0).abs() < 1e-12, "{:?}", h.h);
        assert!((h.h[1] - 0.3).abs() < 1e-12, "{:?}", h.h);
    }
}

#[test]
fn score_head() {
    let net = Network::new(&ModelParams::zeros(ModelKind::Tanh, 17, 16)).unwrap();
    assert_eq!(net.score(&HiddenState { h: vec![0.7; 16] }), 0.5);
    let mut w_out = vec![0.0; 16];
    w_out[0] = 0.5;
    let params = ModelParams::from_effective(ModelKind::Tanh, 17, 16, &[("w_out", w_out)]).unwrap();
    let net = Network::new(&params).unwrap();
    let mut h = vec![0.0; 16];
    assert_eq!(net.score(&HiddenState { h: h.clone() }), 0.5);
    h[0] = 4.0;
    let y = net.score(&HiddenState { h });
    assert!((y - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
    assert!((y - 0.8808).abs() < 1e-4);
}

#[test]
fn dense_baselines_on_zero_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mlp = Network::new(&ModelParams::random(ModelKind::Mlp, 17, 0, &mut rng)).unwrap();
    assert_eq!(mlp.mlp_forward(&[&[0.0; 17]]).unwrap(), 0.5);
    let cmlp = Network::new(&ModelParams::random(ModelKind::Cmlp, 51, 0, &mut rng)).unwrap();
    let z = [0.0; 17];
    assert_eq!(cmlp.mlp_forward(&[&z, &z, &z]).unwrap(), 0.5);
    assert!(cmlp.mlp_forward(&[&z]).is_err());
}

#[test]
fn cmlp_waits_for_context_and_uses_causal_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::new(&ModelParams::random(ModelKind::Cmlp, 51, 0, &mut rng)).unwrap();
    let seq = random_seq(&mut rng, 17, 20);
    let track = net.run_sequence(&seq).unwrap();
    assert_eq!(track.first_frame, 6);
    assert_eq!(track.len(), 14);
    for t in 6..20 {
        let y = net.mlp_forward(&[seq.frame(t - 6), seq.frame(t - 3), seq.frame(t)]).unwrap();
        assert_eq!(track.probability_at(t).unwrap(), y);
    }
}

#[test]
fn one_score_per_frame_and_zero_model_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let seq = random_seq(&mut rng, 17, 100);
    let net = Network::new(&ModelParams::random(ModelKind::Gru, 17, 16, &mut rng)).unwrap();
    assert_eq!(net.run_sequence(&seq).unwrap().len(), 100);
    let zero = Network::new(&ModelParams::zeros(ModelKind::Gru, 17, 16)).unwrap();
    assert!(zero.run_sequence(&seq).unwrap().probabilities().iter().all(|&p| p == 0.5));
}

#[test]
fn gru_with_open_gates_is_a_tanh_rnn() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tanh = ModelParams::random(ModelKind::Tanh, 17, 8, &mut rng);
    let mut gru = ModelParams::zeros(ModelKind::Gru, 17, 8);
    for name in ["w_hh", "w_hx", "w_out"] {
        gru.matrix_mut(name).unwrap().latent = tanh.matrix(name).unwrap().latent.clone();
    }
    for name in ["w_fx", "w_rx"] {
        for v in &mut gru.matrix_mut(name).unwrap().latent.data {
            *v = 0.9f64.atanh();
        }
    }
    let mut seq = FrameSeq::new(17);
    for _ in 0..50 {
        let f: Vec<f64> = (0..17).map(|_| rng.gen_range(0.5..1.0)).collect();
        seq.push(&f);
    }
    let a = Network::new(&tanh).unwrap().run_sequence(&seq).unwrap();
    let b = Network::new(&gru).unwrap().run_sequence(&seq).unwrap();
    for (x, y) in a.logits.iter().zip(&b.logits) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn exact_reference_mode_matches_textbook_mgu() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = ModelParams::random(ModelKind::Mgu, 3, 2, &mut rng);
    let net = Network::with_activation(&params, Activation::Exact);
    let eff = params.effective();
    let [wfh, wfx, whh, whx, _] = &eff.mats[..] else { panic!() };
    let h0 = [0.2, -0.4];
    let x = [0.1, 0.5, 0.9];
    let dot = |m: &Matrix, r: usize, v: &[f64]| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let f: Vec<f64> = (0..2).map(|i| logistic(dot(wfh, i, &h0) + dot(wfx, i, &x))).collect();
    let g = [f[0] * h0[0], f[1] * h0[1]];
    let c: Vec<f64> = (0..2).map(|i| (dot(whh, i, &g) + dot(whx, i, &x)).tanh()).collect();
    let h = net.cell_step(&HiddenState { h: h0.to_vec() }, &x).unwrap();
    for i in 0..2 {
        assert!((h.h[i] - ((1.0 - f[i]) * h0[i] + f[i] * c[i])).abs() < 1e-14);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let net = Network::new(&ModelParams::zeros(ModelKind::Mgu, 17, 16)).unwrap();
    assert!(matches!(
        net.cell_step(&HiddenState::zeros(16), &[0.0; 5]),
        Err(ModelError::Dimension { what: "input", .. })
    ));
    assert!(net.cell_step(&HiddenState::zeros(3), &[0.0; 17]).is_err());
}

#[test]
fn checkpoint_roundtrip_and_rejections() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = ModelParams::random(ModelKind::Gru, 17, 16, &mut rng);
    params.quant = QuantMeta { level: 1, bits: 5, input_bits: 8 };
    let bytes = io::to_bytes(&params);
    assert_eq!(io::from_bytes(&bytes).unwrap(), params);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(io::from_bytes(&bad).is_err());
    assert!(io::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let json: serde_json::Value = serde_json::from_str(&io::to_json(&params).unwrap()).unwrap();
    assert_eq!(json["num_weights"], 1600);
    assert_eq!(json["kind"], "gru");
}

#[test]
fn kind_parsing() {
    assert_eq!("MGU".parse::<ModelKind>().unwrap(), ModelKind::Mgu);
    assert!("lstm".parse::<ModelKind>().is_err());
}

fn kinds() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Tanh), Just(ModelKind::Mgu), Just(ModelKind::Gru), Just(ModelKind::Cmlp)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hidden_state_stays_bounded(seed in any::<u64>(), kind in prop_oneof![Just(ModelKind::Mgu), Just(ModelKind::Gru)], quantized in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::random(kind, 17, 16, &mut rng);
        for m in &mut params.matrices {
            for v in &mut m.latent.data {
                *v *= 6.0;
            }
        }
        if quantized {
            params.quant = QuantMeta { level: 2, bits: 4, input_bits: 8 };
        }
        let net = Network::new(&params).unwrap();
        let mut h = HiddenState::zeros(16);
        for _ in 0..60 {
            let x: Vec<f64> = (0..17).map(|_| rng.gen_range(0.0..3.0)).collect();
            h = net.cell_step(&h, &x).unwrap();
            prop_assert!(h.h.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn split_runs_equal_one_run(seed in any::<u64>(), kind in kinds(), split in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = model_input_dim(kind, 17);
        let net = Network::new(&ModelParams::random(kind, input, 16, &mut rng)).unwrap();
        let seq = random_seq(&mut rng, 17, 40);
        let whole = net.run_sequence(&seq).unwrap();
        let mut state = net.start_stream();
        let a = net.run_from(&mut state, &seq.slice(0, split)).unwrap();
        let b = net.run_from(&mut state, &seq.slice(split, 40)).unwrap();
        let mut joined = a.logits.clone();
        joined.extend(b.logits);
        prop_assert_eq!(joined, whole.logits);
    }
}
