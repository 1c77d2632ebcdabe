//! Checkpoint container.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "WUSM"
//! version    u16      1
//! kind       u8       0 tanh, 1 mgu, 2 gru, 3 mlp, 4 cmlp
//! level      u8       quantization level 0..=2
//! bits       u8       k
//! input_bits u8       ADC bits used at level 2
//! input_dim  u16
//! hidden_dim u16
//! n_mats     u16
//! per matrix:
//!   name_len u8, name bytes (ASCII)
//!   rows u32, cols u32
//!   theta f64        θ of the effective weights (0 at level 0)
//!   rows*cols f64    latent parameters, row-major
//! ```
//!
//! The JSON mirror carries the same fields plus the effective weights, for
//! inspection only.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::params::{Matrix, ModelKind, ModelParams, NamedMatrix, QuantMeta};
use super::ModelError;

const MAGIC: &[u8; 4] = b"WUSM";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let eff = params.effective();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(params.kind.code());
    out.push(params.quant.level);
    out.push(params.quant.bits as u8);
    out.push(params.quant.input_bits as u8);
    out.extend_from_slice(&(params.input_dim as u16).to_le_bytes());
    out.extend_from_slice(&(params.hidden_dim as u16).to_le_bytes());
    out.extend_from_slice(&(params.matrices.len() as u16).to_le_bytes());
    for (m, spec) in params.matrices.iter().zip(&eff.specs) {
        out.push(m.name.len() as u8);
        out.extend_from_slice(m.name.as_bytes());
        out.extend_from_slice(&(m.latent.rows as u32).to_le_bytes());
        out.extend_from_slice(&(m.latent.cols as u32).to_le_bytes());
        let theta = spec.map(|s| s.theta()).unwrap_or(0.0);
        out.extend_from_slice(&theta.to_le_bytes());
        for v in &m.latent.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams, ModelError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Format("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let kind_code = r.u8()?;
    let kind = ModelKind::from_code(kind_code).ok_or_else(|| ModelError::Format(format!("kind code {kind_code}")))?;
    let level = r.u8()?;
    let bits = r.u8()? as u32;
    let input_bits = r.u8()? as u32;
    let input_dim = r.u16()? as usize;
    let hidden_dim = r.u16()? as usize;
    let n = r.u16()? as usize;
    let mut matrices = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ModelError::Format("matrix name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let _theta = r.f64()?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        matrices.push(NamedMatrix { name, latent: Matrix { rows, cols, data } });
    }
    if r.pos != buf.len() {
        return Err(ModelError::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let params = ModelParams { kind, input_dim, hidden_dim, matrices, quant: QuantMeta { level, bits, input_bits } };
    params.validate()?;
    Ok(params)
}

#[derive(Serialize)]
struct JsonMatrix<'a> {
    name: &'a str,
    rows: usize,
    cols: usize,
    theta: Option<f64>,
    latent: &'a [f64],
    effective: &'a [f64],
}

#[derive(Serialize)]
struct JsonModel<'a> {
    format_version: u16,
    kind: ModelKind,
    input_dim: usize,
    hidden_dim: usize,
    quant: QuantMeta,
    num_weights: usize,
    matrices: Vec<JsonMatrix<'a>>,
}

pub fn to_json(params: &ModelParams) -> Result<String, ModelError> {
    let eff = params.effective();
    let matrices = params
        .matrices
        .iter()
        .zip(&eff.mats)
        .zip(&eff.specs)
        .map(|((m, e), s)| JsonMatrix {
            name: &m.name,
            rows: m.latent.rows,
            cols: m.latent.cols,
            theta: s.map(|s| s.theta()),
            latent: &m.latent.data,
            effective: &e.data,
        })
        .collect();
    let doc = JsonModel {
        format_version: CHECKPOINT_VERSION,
        kind: params.kind,
        input_dim: params.input_dim,
        hidden_dim: params.hidden_dim,
        quant: params.quant,
        num_weights: params.num_weights(),
        matrices,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Writes `path` (binary) and `path.json` (mirror).
pub fn save(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_bytes(params))?;
    let mut json_path = path.as_os_str().to_owned();
    json_path.push(".json");
    fs::write(json_path, to_json(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams, ModelError> {
    from_bytes(&fs::read(path)?)
}
