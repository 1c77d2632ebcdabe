//! Backpropagation through time for the bias-free cells and the dense
//! baselines, followed by the chain through the weight reparameterisation.

use super::loss::{loss_and_logit_grad, LabeledSequence, LossKind};
use super::TrainError;
use crate::models::{
    slots, Activation, EffectiveWeights, Matrix, MlpTape, ModelKind, ModelParams, Network, StepTape, CMLP_OFFSETS,
};
use crate::quant::{hard_sigmoid_grad, hard_tanh_grad};

/// One gradient matrix per parameter matrix, in storage order.
pub type Gradients = Vec<Matrix>;

fn zero_like(weights: &EffectiveWeights) -> Gradients {
    weights.mats.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect()
}

#[inline]
fn sigmoid_grad(act: Activation, pre: f64, out: f64) -> f64 {
    match act {
        Activation::Exact => out * (1.0 - out),
        _ => hard_sigmoid_grad(pre),
    }
}

#[inline]
fn tanh_grad(act: Activation, pre: f64, out: f64) -> f64 {
    match act {
        Activation::Exact => 1.0 - out * out,
        _ => hard_tanh_grad(pre),
    }
}

/// Loss of one example and its gradient with respect to the effective
/// weights used in the forward pass.
pub fn effective_gradients(
    net: &Network,
    example: &LabeledSequence,
    loss: LossKind,
) -> Result<(f64, Gradients), TrainError> {
    if matches!(net.activation, Activation::Quantized { .. }) {
        return Err(TrainError::QuantizedActivations);
    }
    if net.kind.is_recurrent() {
        recurrent_gradients(net, example, loss)
    } else {
        dense_gradients(net, example, loss)
    }
}

fn recurrent_gradients(net: &Network, ex: &LabeledSequence, loss: LossKind) -> Result<(f64, Gradients), TrainError> {
    let n = net.hidden_dim;
    let steps = ex.frames.len();
    let mut tapes: Vec<StepTape> = Vec::with_capacity(steps);
    let mut h = vec![0.0; n];
    for t in 0..steps {
        let tape = net.step_taped(&h, ex.frames.frame(t))?;
        h.clone_from(&tape.h);
        tapes.push(tape);
    }
    let logits: Vec<f64> = tapes.iter().map(|t| t.logit).collect();
    let (value, dlogits) = loss_and_logit_grad(loss, &logits, &ex.noise, &ex.speech)?;

    let w = &net.weights.mats;
    let s = slots(net.kind);
    let act = net.activation;
    let mut grads = zero_like(&net.weights);
    let last = match dlogits.iter().rposition(|&g| g != 0.0) {
        Some(t) => t,
        None => return Ok((value, grads)),
    };

    let mut dh_next = vec![0.0; n];
    let (mut da_f, mut da_r, mut da_c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut dg = vec![0.0; n];
    for t in (0..=last).rev() {
        let tape = &tapes[t];
        let mut dh = std::mem::take(&mut dh_next);
        let dz = dlogits[t];
        if dz != 0.0 {
            let w_out = w[s.out].row(0);
            for i in 0..n {
                dh[i] += dz * w_out[i];
            }
            grads[s.out].outer_acc(&[dz], &tape.h);
        }
        let mut dh_prev = vec![0.0; n];
        match net.kind {
            ModelKind::Tanh => {
                for i in 0..n {
                    da_c[i] = dh[i] * tanh_grad(act, tape.a_c[i], tape.c[i]);
                }
                grads[s.hh].outer_acc(&da_c, &tape.h_prev);
                grads[s.hx].outer_acc(&da_c, &tape.x);
                w[s.hh].matvec_t_acc(&da_c, &mut dh_prev);
            }
            ModelKind::Mgu | ModelKind::Gru => {
                let mut df = vec![0.0; n];
                for i in 0..n {
                    df[i] = dh[i] * (tape.c[i] - tape.h_prev[i]);
                    dh_prev[i] = dh[i] * (1.0 - tape.f[i]);
                    da_c[i] = dh[i] * tape.f[i] * tanh_grad(act, tape.a_c[i], tape.c[i]);
                }
                grads[s.hh].outer_acc(&da_c, &tape.g);
                grads[s.hx].outer_acc(&da_c, &tape.x);
                dg.iter_mut().for_each(|v| *v = 0.0);
                w[s.hh].matvec_t_acc(&da_c, &mut dg);
                if net.kind == ModelKind::Mgu {
                    for i in 0..n {
                        df[i] += dg[i] * tape.h_prev[i];
                        dh_prev[i] += dg[i] * tape.f[i];
                    }
                } else {
                    let (rh, rx) = (s.rh.unwrap(), s.rx.unwrap());
                    for i in 0..n {
                        dh_prev[i] += dg[i] * tape.r[i];
                        da_r[i] = dg[i] * tape.h_prev[i] * sigmoid_grad(act, tape.a_r[i], tape.r[i]);
                    }
                    grads[rh].outer_acc(&da_r, &tape.h_prev);
                    grads[rx].outer_acc(&da_r, &tape.x);
                    w[rh].matvec_t_acc(&da_r, &mut dh_prev);
                }
                let (fh, fx) = (s.fh.unwrap(), s.fx.unwrap());
                for i in 0..n {
                    da_f[i] = df[i] * sigmoid_grad(act, tape.a_f[i], tape.f[i]);
                }
                grads[fh].outer_acc(&da_f, &tape.h_prev);
                grads[fx].outer_acc(&da_f, &tape.x);
                w[fh].matvec_t_acc(&da_f, &mut dh_prev);
            }
            ModelKind::Mlp | ModelKind::Cmlp => unreachable!(),
        }
        dh_next = dh_prev;
    }
    Ok((value, grads))
}

/// Input vector of a dense model at frame `t`, if it has enough context.
fn dense_input(kind: ModelKind, ex: &LabeledSequence, t: usize) -> Option<Vec<f64>> {
    match kind {
        ModelKind::Mlp => Some(ex.frames.frame(t).to_vec()),
        ModelKind::Cmlp => {
            if t < CMLP_OFFSETS[0] {
                return None;
            }
            Some(CMLP_OFFSETS.iter().flat_map(|&o| ex.frames.frame(t - o).iter().copied()).collect())
        }
        _ => unreachable!(),
    }
}

fn dense_gradients(net: &Network, ex: &LabeledSequence, loss: LossKind) -> Result<(f64, Gradients), TrainError> {
    let first = if net.kind == ModelKind::Cmlp { CMLP_OFFSETS[0] } else { 0 };
    let mut tapes: Vec<MlpTape> = Vec::with_capacity(ex.frames.len());
    for t in first..ex.frames.len() {
        let x = dense_input(net.kind, ex, t).expect("context available");
        tapes.push(net.mlp_taped(&x)?);
    }
    let logits: Vec<f64> = tapes.iter().map(|t| t.logit).collect();
    let (noise, speech) = ex.scored_sets(first);
    let mut grads = zero_like(&net.weights);
    if noise.is_empty() && speech.is_empty() {
        return Ok((0.0, grads));
    }
    let (value, dlogits) = loss_and_logit_grad(loss, &logits, &noise, &speech)?;
    let w = &net.weights.mats;
    let act = net.activation;
    for (tape, &dz) in tapes.iter().zip(&dlogits) {
        if dz == 0.0 {
            continue;
        }
        grads[3].outer_acc(&[dz], &tape.post[2]);
        let mut delta: Vec<f64> = w[3].row(0).iter().map(|&v| v * dz).collect();
        for layer in (0..3).rev() {
            let da: Vec<f64> = delta
                .iter()
                .zip(tape.pre[layer].iter().zip(&tape.post[layer]))
                .map(|(d, (&pre, &post))| d * tanh_grad(act, pre, post))
                .collect();
            let input = if layer == 0 { &tape.x } else { &tape.post[layer - 1] };
            grads[layer].outer_acc(&da, input);
            if layer > 0 {
                let mut prev = vec![0.0; w[layer].cols];
                w[layer].matvec_t_acc(&da, &mut prev);
                delta = prev;
            }
        }
    }
    Ok((value, grads))
}

/// Chains effective-weight gradients back to the latent parameters:
/// `w = tanh(v)`, with a clipped straight-through estimator across the
/// quantizer when the weights are quantized.
pub fn latent_gradients(
    params: &ModelParams,
    weights: &EffectiveWeights,
    grads: &Gradients,
) -> Result<Gradients, TrainError> {
    let mut out = Vec::with_capacity(grads.len());
    for ((m, g), spec) in params.matrices.iter().zip(grads).zip(&weights.specs) {
        let mut lg = Matrix::zeros(g.rows, g.cols);
        for ((dv, &v), &dw) in lg.data.iter_mut().zip(&m.latent.data).zip(&g.data) {
            let w = v.tanh();
            let pass = spec.is_none_or(|s| s.passes_gradient(w));
            *dv = if pass { dw * (1.0 - w * w) } else { 0.0 };
        }
        if lg.data.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(m.name.clone()));
        }
        out.push(lg);
    }
    Ok(out)
}

/// Loss and latent-parameter gradients of one example at the parameters'
/// quantization level (0 or 1).
pub fn bptt_gradients(
    params: &ModelParams,
    example: &LabeledSequence,
    loss: LossKind,
) -> Result<(f64, Gradients), TrainError> {
    let net = Network::new(params)?;
    let (value, grads) = effective_gradients(&net, example, loss)?;
    Ok((value, latent_gradients(params, &net.weights, &grads)?))
}
