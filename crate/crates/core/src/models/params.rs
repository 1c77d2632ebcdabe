use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::quant::{self, QuantSpec};

/// Recurrent cell and baseline architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tanh,
    Mgu,
    Gru,
    Mlp,
    Cmlp,
}

impl ModelKind {
    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::Tanh | ModelKind::Mgu | ModelKind::Gru)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tanh => "tanh",
            ModelKind::Mgu => "mgu",
            ModelKind::Gru => "gru",
            ModelKind::Mlp => "mlp",
            ModelKind::Cmlp => "cmlp",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ModelKind::Tanh => 0,
            ModelKind::Mgu => 1,
            ModelKind::Gru => 2,
            ModelKind::Mlp => 3,
            ModelKind::Cmlp => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ModelKind::Tanh,
            1 => ModelKind::Mgu,
            2 => ModelKind::Gru,
            3 => ModelKind::Mlp,
            4 => ModelKind::Cmlp,
            _ => return None,
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" | "tanh-rnn" => Ok(ModelKind::Tanh),
            "mgu" => Ok(ModelKind::Mgu),
            "gru" => Ok(ModelKind::Gru),
            "mlp" => Ok(ModelKind::Mlp),
            "cmlp" => Ok(ModelKind::Cmlp),
            _ => Err(ModelError::UnknownKind(s.to_string())),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden sizes of the dense baselines.
pub const MLP_LAYERS: [usize; 4] = [60, 24, 11, 1];
/// Frames of context fed to the contextual MLP, oldest first.
pub const CMLP_OFFSETS: [usize; 3] = [6, 3, 0];

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += M v`
    #[inline]
    pub fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *o += acc;
        }
    }

    /// `out += M^T v`
    #[inline]
    pub fn matvec_t_acc(&self, v: &[f64], out: &mut [f64]) {
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            if vr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
    }

    /// `self += u v^T`
    #[inline]
    pub fn outer_acc(&mut self, u: &[f64], v: &[f64]) {
        for (r, &ur) in u.iter().enumerate() {
            if ur == 0.0 {
                continue;
            }
            let cols = self.cols;
            for (m, b) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(v) {
                *m += ur * b;
            }
        }
    }
}

/// Quantization stage of a parameter set.
///
/// Level 0 trains with hard activations and tanh-bounded weights; level 1
/// quantizes the weights in the forward pass; level 2 additionally
/// quantizes activations, inputs and the hidden state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantMeta {
    pub level: u8,
    pub bits: u32,
    /// ADC resolution applied to the inputs at level 2.
    pub input_bits: u32,
}

impl Default for QuantMeta {
    fn default() -> Self {
        QuantMeta { level: 0, bits: 4, input_bits: 8 }
    }
}

/// A named weight matrix. `latent` holds the free parameters `v`; the
/// effective weight is `tanh(v)`, quantized from level 1 on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub latent: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub matrices: Vec<NamedMatrix>,
    pub quant: QuantMeta,
}

/// Names and shapes of the weight matrices of a model, in storage order.
pub fn matrix_shapes(kind: ModelKind, input_dim: usize, hidden_dim: usize) -> Vec<(&'static str, usize, usize)> {
    let (i, h) = (input_dim, hidden_dim);
    match kind {
        ModelKind::Tanh => vec![("w_hh", h, h), ("w_hx", h, i), ("w_out", 1, h)],
        ModelKind::Mgu => vec![("w_fh", h, h), ("w_fx", h, i), ("w_hh", h, h), ("w_hx", h, i), ("w_out", 1, h)],
        ModelKind::Gru => vec![
            ("w_fh", h, h),
            ("w_fx", h, i),
            ("w_rh", h, h),
            ("w_rx", h, i),
            ("w_hh", h, h),
            ("w_hx", h, i),
            ("w_out", 1, h),
        ],
        ModelKind::Mlp | ModelKind::Cmlp => {
            let [a, b, c, d] = MLP_LAYERS;
            vec![("l1", a, i), ("l2", b, a), ("l3", c, b), ("l4", d, c)]
        }
    }
}

/// Number of inputs a model kind expects for a given frame dimension.
pub fn model_input_dim(kind: ModelKind, frame_dim: usize) -> usize {
    if kind == ModelKind::Cmlp {
        frame_dim * CMLP_OFFSETS.len()
    } else {
        frame_dim
    }
}

impl ModelParams {
    /// All-zero latent parameters.
    pub fn zeros(kind: ModelKind, input_dim: usize, hidden_dim: usize) -> Self {
        let matrices = matrix_shapes(kind, input_dim, hidden_dim)
            .into_iter()
            .map(|(name, r, c)| NamedMatrix { name: name.to_string(), latent: Matrix::zeros(r, c) })
            .collect();
        ModelParams { kind, input_dim, hidden_dim, matrices, quant: QuantMeta::default() }
    }

    /// Latent parameters drawn uniformly from `[-0.5, 0.5)`.
    pub fn random<R: Rng>(kind: ModelKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        for m in &mut p.matrices {
            for v in &mut m.latent.data {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    /// Builds parameters whose effective (tanh-bounded) weights equal the
    /// given values. Values must lie strictly inside `(-1, 1)`.
    pub fn from_effective(
        kind: ModelKind,
        input_dim: usize,
        hidden_dim: usize,
        weights: &[(&str, Vec<f64>)],
    ) -> Result<Self, ModelError> {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        for (name, values) in weights {
            let m = p.matrix_mut(name)?;
            if values.len() != m.latent.len() {
                return Err(ModelError::Dimension {
                    what: "weight matrix",
                    expected: m.latent.len(),
                    got: values.len(),
                });
            }
            for (v, &w) in m.latent.data.iter_mut().zip(values) {
                if !(w > -1.0 && w < 1.0) {
                    return Err(ModelError::Format(format!("effective weight {w} outside (-1, 1)")));
                }
                *v = w.atanh();
            }
        }
        Ok(p)
    }

    pub fn num_weights(&self) -> usize {
        self.matrices.iter().map(|m| m.latent.len()).sum()
    }

    pub fn matrix(&self, name: &str) -> Result<&NamedMatrix, ModelError> {
        self.matrices.iter().find(|m| m.name == name).ok_or_else(|| ModelError::MissingMatrix(name.to_string()))
    }

    pub fn matrix_mut(&mut self, name: &str) -> Result<&mut NamedMatrix, ModelError> {
        self.matrices.iter_mut().find(|m| m.name == name).ok_or_else(|| ModelError::MissingMatrix(name.to_string()))
    }

    /// Checks matrix names and shapes against the architecture.
    pub fn validate(&self) -> Result<(), ModelError> {
        let shapes = matrix_shapes(self.kind, self.input_dim, self.hidden_dim);
        if shapes.len() != self.matrices.len() {
            return Err(ModelError::Format(format!(
                "{} model needs {} matrices, found {}",
                self.kind,
                shapes.len(),
                self.matrices.len()
            )));
        }
        for ((name, r, c), m) in shapes.iter().zip(&self.matrices) {
            if m.name != *name || m.latent.rows != *r || m.latent.cols != *c || m.latent.data.len() != r * c {
                return Err(ModelError::Format(format!(
                    "matrix {} has shape {}x{}, expected {} {}x{}",
                    m.name, m.latent.rows, m.latent.cols, name, r, c
                )));
            }
        }
        if self.quant.level > 2 {
            return Err(ModelError::Format(format!("quantization level {} out of range", self.quant.level)));
        }
        if self.quant.level > 0 && !(2..=16).contains(&self.quant.bits) {
            return Err(ModelError::Format(format!("unsupported bit width {}", self.quant.bits)));
        }
        Ok(())
    }

    /// Effective weights used by the forward pass at the current level.
    pub fn effective(&self) -> EffectiveWeights {
        let mut mats = Vec::with_capacity(self.matrices.len());
        let mut specs = Vec::with_capacity(self.matrices.len());
        for m in &self.matrices {
            let bounded: Vec<f64> = m.latent.data.iter().map(|v| v.tanh()).collect();
            let (data, spec) = if self.quant.level >= 1 {
                let (q, spec) = quant::quantize_weights(&bounded, self.quant.bits);
                (q, Some(spec))
            } else {
                (bounded, None)
            };
            mats.push(Matrix { rows: m.latent.rows, cols: m.latent.cols, data });
            specs.push(spec);
        }
        EffectiveWeights { mats, specs }
    }
}

/// Weights as seen by the forward pass, in [`matrix_shapes`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveWeights {
    pub mats: Vec<Matrix>,
    /// Per-matrix quantization parameters (level >= 1).
    pub specs: Vec<Option<QuantSpec>>,
}
