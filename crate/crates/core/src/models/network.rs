//! Forward computation shared by inference and training.

use std::collections::VecDeque;

use super::params::{EffectiveWeights, ModelKind, ModelParams, CMLP_OFFSETS};
use super::{FrameSeq, ModelError};
use crate::afe::adc_quantize;
use crate::quant::{
    hard_sigmoid, hard_sigmoid_qtz, hard_tanh, hard_tanh_qtz, round_on_grid, signed_levels, unsigned_levels,
};

/// Which nonlinearities the forward pass uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// Logistic and tanh; reference mode for tests only.
    Exact,
    /// Piecewise-linear hard sigmoid / hard tanh.
    Hard,
    /// Hard activations snapped to k-bit grids, with quantized inputs and
    /// a re-quantized hidden state.
    Quantized { bits: u32, input_bits: u32 },
}

impl Activation {
    #[inline]
    pub fn sigmoid(self, x: f64) -> f64 {
        match self {
            Activation::Exact => logistic(x),
            Activation::Hard => hard_sigmoid(x),
            Activation::Quantized { bits, .. } => hard_sigmoid_qtz(x, bits),
        }
    }

    #[inline]
    pub fn tanh(self, x: f64) -> f64 {
        match self {
            Activation::Exact => x.tanh(),
            Activation::Hard => hard_tanh(x),
            Activation::Quantized { bits, .. } => hard_tanh_qtz(x, bits),
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Hidden state of a recurrent cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(dim: usize) -> Self {
        HiddenState { h: vec![0.0; dim] }
    }
}

/// Intermediate values of one recurrent step, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct StepTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub a_f: Vec<f64>,
    pub f: Vec<f64>,
    pub a_r: Vec<f64>,
    pub r: Vec<f64>,
    /// Gated previous state entering the candidate matrix.
    pub g: Vec<f64>,
    pub a_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub logit: f64,
}

/// Intermediate values of one dense-baseline evaluation.
#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    pub x: Vec<f64>,
    /// Pre-activations of the three hidden layers.
    pub pre: [Vec<f64>; 3],
    /// Outputs of the three hidden layers.
    pub post: [Vec<f64>; 3],
    pub logit: f64,
}

/// Per-frame logits of a sequence. Frames before `first_frame` have no
/// score (insufficient context).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTrack {
    pub first_frame: usize,
    pub logits: Vec<f64>,
}

impl ScoreTrack {
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| logistic(z)).collect()
    }

    /// Probability of absolute frame `t`, if scored.
    pub fn probability_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.first_frame).and_then(|i| self.logits.get(i)).map(|&z| logistic(z))
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Streaming evaluation state: hidden vector for the recurrent cells, a
/// short frame history for the contextual MLP.
#[derive(Clone, Debug)]
pub struct StreamState {
    pub hidden: HiddenState,
    history: VecDeque<Vec<f64>>,
}

/// A model ready for evaluation: weights resolved for its quantization level.
#[derive(Clone, Debug)]
pub struct Network {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: EffectiveWeights,
    pub activation: Activation,
}

/// Positions of the recurrent matrices in storage order.
#[derive(Clone, Copy, Debug)]
pub struct Slots {
    pub fh: Option<usize>,
    pub fx: Option<usize>,
    pub rh: Option<usize>,
    pub rx: Option<usize>,
    pub hh: usize,
    pub hx: usize,
    pub out: usize,
}

/// Matrix slots of a recurrent kind. Panics for the dense baselines.
pub fn slots(kind: ModelKind) -> Slots {
    match kind {
        ModelKind::Tanh => Slots { fh: None, fx: None, rh: None, rx: None, hh: 0, hx: 1, out: 2 },
        ModelKind::Mgu => Slots { fh: Some(0), fx: Some(1), rh: None, rx: None, hh: 2, hx: 3, out: 4 },
        ModelKind::Gru => Slots { fh: Some(0), fx: Some(1), rh: Some(2), rx: Some(3), hh: 4, hx: 5, out: 6 },
        ModelKind::Mlp | ModelKind::Cmlp => unreachable!("dense models have no recurrent slots"),
    }
}

impl Network {
    /// Resolves the forward pass for the parameters' quantization level.
    pub fn new(params: &ModelParams) -> Result<Self, ModelError> {
        params.validate()?;
        let activation = if params.quant.level >= 2 {
            Activation::Quantized { bits: params.quant.bits, input_bits: params.quant.input_bits }
        } else {
            Activation::Hard
        };
        Ok(Self::with_activation(params, activation))
    }

    /// Same weights, explicit activation mode.
    pub fn with_activation(params: &ModelParams, activation: Activation) -> Self {
        Network {
            kind: params.kind,
            input_dim: params.input_dim,
            hidden_dim: params.hidden_dim,
            weights: params.effective(),
            activation,
        }
    }

    /// Input as seen by the network (ADC-quantized at level 2).
    fn prepare_input(&self, x: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Quantized { input_bits, .. } => x.iter().map(|&v| adc_quantize(v, input_bits)).collect(),
            _ => x.to_vec(),
        }
    }

    fn requantize_hidden(&self, h: &mut [f64]) {
        if let Activation::Quantized { bits, .. } = self.activation {
            let s = signed_levels(bits) as f64;
            for v in h {
                *v = round_on_grid(*v * s) / s;
            }
        }
    }

    /// One recurrent step with every intermediate recorded.
    pub fn step_taped(&self, h_prev: &[f64], x: &[f64]) -> Result<StepTape, ModelError> {
        if !self.kind.is_recurrent() {
            return Err(ModelError::NotRecurrent(self.kind));
        }
        if x.len() != self.input_dim {
            return Err(ModelError::Dimension { what: "input", expected: self.input_dim, got: x.len() });
        }
        if h_prev.len() != self.hidden_dim {
            return Err(ModelError::Dimension { what: "hidden state", expected: self.hidden_dim, got: h_prev.len() });
        }
        let n = self.hidden_dim;
        let act = self.activation;
        let w = &self.weights.mats;
        let s = slots(self.kind);
        let x = self.prepare_input(x);
        let mut tape = StepTape { h_prev: h_prev.to_vec(), ..StepTape::default() };

        let gate = |hm: usize, xm: usize| {
            let mut a = vec![0.0; n];
            w[hm].matvec_acc(h_prev, &mut a);
            w[xm].matvec_acc(&x, &mut a);
            let g: Vec<f64> = a.iter().map(|&v| act.sigmoid(v)).collect();
            (a, g)
        };

        match self.kind {
            ModelKind::Tanh => {
                let mut a = vec![0.0; n];
                w[s.hh].matvec_acc(h_prev, &mut a);
                w[s.hx].matvec_acc(&x, &mut a);
                tape.c = a.iter().map(|&v| act.tanh(v)).collect();
                tape.a_c = a;
                tape.h = tape.c.clone();
            }
            ModelKind::Mgu | ModelKind::Gru => {
                let (a_f, f) = gate(s.fh.unwrap(), s.fx.unwrap());
                let reset = if self.kind == ModelKind::Gru {
                    let (a_r, r) = gate(s.rh.unwrap(), s.rx.unwrap());
                    tape.a_r = a_r;
                    tape.r = r;
                    &tape.r
                } else {
                    &f
                };
                let g: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
                let mut a_c = vec![0.0; n];
                w[s.hh].matvec_acc(&g, &mut a_c);
                w[s.hx].matvec_acc(&x, &mut a_c);
                let c: Vec<f64> = a_c.iter().map(|&v| act.tanh(v)).collect();
                let mut h: Vec<f64> = (0..n).map(|i| (1.0 - f[i]) * h_prev[i] + f[i] * c[i]).collect();
                self.requantize_hidden(&mut h);
                tape.a_f = a_f;
                tape.f = f;
                tape.g = g;
                tape.a_c = a_c;
                tape.c = c;
                tape.h = h;
            }
            ModelKind::Mlp | ModelKind::Cmlp => unreachable!(),
        }
        tape.logit = self.snap_logit(self.weights.mats[s.out].row(0).iter().zip(&tape.h).map(|(a, b)| a * b).sum());
        tape.x = x;
        Ok(tape)
    }

    /// Table-1 cell update.
    pub fn cell_step(&self, h_prev: &HiddenState, x: &[f64]) -> Result<HiddenState, ModelError> {
        Ok(HiddenState { h: self.step_taped(&h_prev.h, x)?.h })
    }

    /// Logit of the dense output row.
    pub fn logit(&self, h: &HiddenState) -> f64 {
        let out = &self.weights.mats[slots(self.kind).out];
        self.snap_logit(out.row(0).iter().zip(&h.h).map(|(a, b)| a * b).sum())
    }

    /// At level 2 the logit is an integer multiple of `1 / ((2^k-1)(2^(k-1)-1)^2)`;
    /// snapping removes accumulation noise so threshold decisions match the
    /// integer engine.
    fn snap_logit(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Quantized { bits, .. } => {
                let d = (unsigned_levels(bits) * signed_levels(bits) * signed_levels(bits)) as f64;
                round_on_grid(z * d) / d
            }
            _ => z,
        }
    }

    /// Wake-up probability of a hidden state.
    pub fn score(&self, h: &HiddenState) -> f64 {
        logistic(self.logit(h))
    }

    /// Dense baseline on an already concatenated input vector.
    pub fn mlp_taped(&self, x: &[f64]) -> Result<MlpTape, ModelError> {
        if self.kind.is_recurrent() {
            return Err(ModelError::NotDense(self.kind));
        }
        if x.len() != self.input_dim {
            return Err(ModelError::Dimension { what: "input", expected: self.input_dim, got: x.len() });
        }
        let act = self.activation;
        let mut tape = MlpTape { x: self.prepare_input(x), ..MlpTape::default() };
        let mut current = tape.x.clone();
        for layer in 0..3 {
            let m = &self.weights.mats[layer];
            let mut a = vec![0.0; m.rows];
            m.matvec_acc(&current, &mut a);
            let out: Vec<f64> = a.iter().map(|&v| act.tanh(v)).collect();
            tape.pre[layer] = a;
            tape.post[layer] = out.clone();
            current = out;
        }
        tape.logit = self.snap_logit(self.weights.mats[3].row(0).iter().zip(&current).map(|(a, b)| a * b).sum());
        Ok(tape)
    }

    /// MLP on one frame or CMLP on frames `{t-6, t-3, t}` (oldest first).
    pub fn mlp_forward(&self, frames: &[&[f64]]) -> Result<f64, ModelError> {
        let needed = if self.kind == ModelKind::Cmlp { CMLP_OFFSETS.len() } else { 1 };
        if frames.len() != needed {
            return Err(ModelError::Dimension { what: "context frames", expected: needed, got: frames.len() });
        }
        let x: Vec<f64> = frames.iter().flat_map(|f| f.iter().copied()).collect();
        Ok(logistic(self.mlp_taped(&x)?.logit))
    }

    pub fn start_stream(&self) -> StreamState {
        StreamState { hidden: HiddenState::zeros(self.hidden_dim), history: VecDeque::new() }
    }

    /// Feeds one frame; returns the logit when one is emitted.
    pub fn push(&self, state: &mut StreamState, frame: &[f64]) -> Result<Option<f64>, ModelError> {
        match self.kind {
            ModelKind::Tanh | ModelKind::Mgu | ModelKind::Gru => {
                let tape = self.step_taped(&state.hidden.h, frame)?;
                state.hidden.h = tape.h;
                Ok(Some(tape.logit))
            }
            ModelKind::Mlp => Ok(Some(self.mlp_taped(frame)?.logit)),
            ModelKind::Cmlp => {
                let span = CMLP_OFFSETS[0] + 1;
                state.history.push_back(frame.to_vec());
                if state.history.len() > span {
                    state.history.pop_front();
                }
                if state.history.len() < span {
                    return Ok(None);
                }
                let x: Vec<f64> =
                    CMLP_OFFSETS.iter().flat_map(|&off| state.history[span - 1 - off].iter().copied()).collect();
                Ok(Some(self.mlp_taped(&x)?.logit))
            }
        }
    }

    /// Scores a whole sequence from the zero state.
    pub fn run_sequence(&self, frames: &FrameSeq) -> Result<ScoreTrack, ModelError> {
        let mut state = self.start_stream();
        self.run_from(&mut state, frames)
    }

    /// Scores a sequence continuing from `state`.
    pub fn run_from(&self, state: &mut StreamState, frames: &FrameSeq) -> Result<ScoreTrack, ModelError> {
        let mut logits = Vec::with_capacity(frames.len());
        let mut first_frame = None;
        for t in 0..frames.len() {
            if let Some(z) = self.push(state, frames.frame(t))? {
                first_frame.get_or_insert(t);
                logits.push(z);
            }
        }
        Ok(ScoreTrack { first_frame: first_frame.unwrap_or(frames.len()), logits })
    }
}
