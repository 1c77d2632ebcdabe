//! Hardware weight container.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic       4 bytes  "WUSW"
//! version     u16      1
//! kind        u8       0 tanh, 1 mgu, 2 gru
//! bits        u8       k
//! input_bits  u8       ADC resolution
//! reserved    u8       0
//! input_dim   u16
//! hidden_dim  u16
//! n_mats      u16
//! per matrix: rows u16, cols u16, theta u32 (unsigned Q8.24)
//! payload_len u32      bytes
//! payload              k-bit two's-complement codes, matrices in storage
//!                      order, row-major, packed LSB first (k = 4: low
//!                      nibble holds the earlier weight)
//! ```
//!
//! The hex mirror prints the same bytes, 16 per line. The footprint report
//! counts payload bytes only; kB means 1024 bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fixed::{FixedMatrix, FixedPointModel};
use super::{unsigned_levels, QuantError};
use crate::models::{matrix_shapes, ModelKind};

const MAGIC: &[u8; 4] = b"WUSW";
pub const EXPORT_VERSION: u16 = 1;
const THETA_FRAC_BITS: u32 = 24;

/// θ as unsigned Q8.24.
pub fn theta_to_q824(theta_code: i64, bits: u32) -> u32 {
    let theta = theta_code as f64 / unsigned_levels(bits) as f64;
    (theta * (1u64 << THETA_FRAC_BITS) as f64).round() as u32
}

/// Recovers the θ code from its Q8.24 form; exact for k <= 8.
pub fn theta_from_q824(q: u32, bits: u32) -> i64 {
    (q as f64 * unsigned_levels(bits) as f64 / (1u64 << THETA_FRAC_BITS) as f64).round() as i64
}

/// Packs signed codes into a little-endian bit stream.
pub fn pack_codes(codes: impl IntoIterator<Item = i64>, bits: u32) -> Vec<u8> {
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::new();
    let (mut acc, mut filled) = (0u64, 0u32);
    for c in codes {
        acc |= ((c as u64) & mask) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

/// Unpacks `count` signed codes.
pub fn unpack_codes(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<i64>, QuantError> {
    let needed = (count * bits as usize).div_ceil(8);
    if bytes.len() != needed {
        return Err(QuantError::Format(format!("payload holds {} bytes, expected {needed}", bytes.len())));
    }
    let mask = (1u64 << bits) - 1;
    let sign = 1u64 << (bits - 1);
    let mut out = Vec::with_capacity(count);
    let (mut acc, mut filled) = (0u64, 0u32);
    let mut it = bytes.iter();
    while out.len() < count {
        while filled < bits {
            acc |= (*it.next().expect("length checked") as u64) << filled;
            filled += 8;
        }
        let raw = acc & mask;
        acc >>= bits;
        filled -= bits;
        out.push(if raw & sign != 0 { raw as i64 - (1i64 << bits) } else { raw as i64 });
    }
    Ok(out)
}

pub fn payload_bytes(num_weights: usize, bits: u32) -> usize {
    (num_weights * bits as usize).div_ceil(8)
}

pub fn to_bytes(model: &FixedPointModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&EXPORT_VERSION.to_le_bytes());
    out.push(model.kind.code());
    out.push(model.bits as u8);
    out.push(model.input_bits as u8);
    out.push(0);
    out.extend_from_slice(&(model.input_dim as u16).to_le_bytes());
    out.extend_from_slice(&(model.hidden_dim as u16).to_le_bytes());
    out.extend_from_slice(&(model.matrices.len() as u16).to_le_bytes());
    for m in &model.matrices {
        out.extend_from_slice(&(m.rows as u16).to_le_bytes());
        out.extend_from_slice(&(m.cols as u16).to_le_bytes());
        out.extend_from_slice(&theta_to_q824(m.theta_code, model.bits).to_le_bytes());
    }
    let payload = pack_codes(model.matrices.iter().flat_map(|m| m.codes.iter().copied()), model.bits);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], QuantError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| QuantError::Format("truncated weight file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, QuantError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, QuantError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, QuantError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FixedPointModel, QuantError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(QuantError::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != EXPORT_VERSION {
        return Err(QuantError::Format(format!("unsupported version {version}")));
    }
    let kind = ModelKind::from_code(c.u8()?).ok_or_else(|| QuantError::Format("unknown model kind".into()))?;
    let bits = c.u8()? as u32;
    let input_bits = c.u8()? as u32;
    c.u8()?;
    let input_dim = c.u16()? as usize;
    let hidden_dim = c.u16()? as usize;
    let n_mats = c.u16()? as usize;
    if !(2..=16).contains(&bits) {
        return Err(QuantError::Format(format!("bit width {bits}")));
    }
    let shapes = matrix_shapes(kind, input_dim, hidden_dim);
    if n_mats != shapes.len() {
        return Err(QuantError::Format(format!("{kind} needs {} matrices, header says {n_mats}", shapes.len())));
    }
    let mut headers = Vec::with_capacity(n_mats);
    for (name, r, cols) in &shapes {
        let (rows, cc, theta) = (c.u16()? as usize, c.u16()? as usize, c.u32()?);
        if rows != *r || cc != *cols {
            return Err(QuantError::Format(format!("matrix {name} is {rows}x{cc}, expected {r}x{cols}")));
        }
        headers.push((name.to_string(), rows, cc, theta_from_q824(theta, bits)));
    }
    let len = c.u32()? as usize;
    let payload = c.take(len)?;
    if c.pos != bytes.len() {
        return Err(QuantError::Format("trailing bytes after payload".into()));
    }
    let total: usize = headers.iter().map(|h| h.1 * h.2).sum();
    let mut codes = unpack_codes(payload, bits, total)?.into_iter();
    let matrices = headers
        .into_iter()
        .map(|(name, rows, cols, theta_code)| FixedMatrix {
            name,
            rows,
            cols,
            theta_code,
            codes: codes.by_ref().take(rows * cols).collect(),
        })
        .collect();
    let model = FixedPointModel { kind, input_dim, hidden_dim, bits, input_bits, matrices };
    model.validate()?;
    Ok(model)
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 3);
    for line in bytes.chunks(16) {
        let words: Vec<String> = line.iter().map(|b| format!("{b:02x}")).collect();
        s.push_str(&words.join(" "));
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub weights: usize,
    pub bits: u32,
    pub payload_bytes: usize,
    /// Payload in kB (1024 bytes), two decimals.
    pub kilobytes: String,
    pub file_bytes: usize,
}

pub fn footprint(model: &FixedPointModel) -> Footprint {
    let weights = model.num_weights();
    let payload = payload_bytes(weights, model.bits);
    Footprint {
        kind: model.kind,
        hidden_dim: model.hidden_dim,
        weights,
        bits: model.bits,
        payload_bytes: payload,
        kilobytes: format!("{:.2}", payload as f64 / 1024.0),
        file_bytes: to_bytes(model).len(),
    }
}

/// Files written by [`export_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExportPaths {
    pub binary: PathBuf,
    pub hex: PathBuf,
    pub footprint: PathBuf,
}

/// Writes `path`, `path.hex` and `path.footprint.json`.
pub fn export_weights(model: &FixedPointModel, path: &Path) -> Result<(ExportPaths, Footprint), QuantError> {
    model.validate()?;
    let bytes = to_bytes(model);
    let with_suffix = |suffix: &str| {
        let mut s = path.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    let paths =
        ExportPaths { binary: path.to_path_buf(), hex: with_suffix(".hex"), footprint: with_suffix(".footprint.json") };
    let fp = footprint(model);
    fs::write(&paths.binary, &bytes)?;
    fs::write(&paths.hex, to_hex(&bytes))?;
    fs::write(&paths.footprint, serde_json::to_string_pretty(&fp)? + "\n")?;
    Ok((paths, fp))
}

pub fn load_weights(path: &Path) -> Result<FixedPointModel, QuantError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelParams;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(kind: ModelKind, bits: u32) -> FixedPointModel {
        let mut p = ModelParams::random(kind, 17, 16, &mut ChaCha8Rng::seed_from_u64(9));
        p.quant.level = 2;
        p.quant.bits = bits;
        FixedPointModel::from_params(&p).unwrap()
    }

    #[test]
    fn payload_sizes() {
        assert_eq!(footprint(&model(ModelKind::Mgu, 4)).payload_bytes, 536);
        assert_eq!(footprint(&model(ModelKind::Mgu, 4)).kilobytes, "0.52");
        assert_eq!(footprint(&model(ModelKind::Gru, 4)).payload_bytes, 800);
        assert_eq!(footprint(&model(ModelKind::Tanh, 4)).payload_bytes, 272);
    }

    #[test]
    fn two_weights_per_byte_low_nibble_first() {
        assert_eq!(pack_codes([1, -1, 7, -7], 4), vec![0xf1, 0x97]);
        assert_eq!(unpack_codes(&[0xf1, 0x97], 4, 4).unwrap(), vec![1, -1, 7, -7]);
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for bits in [3, 4, 5, 6] {
            let m = model(ModelKind::Gru, bits);
            let path = dir.path().join(format!("gru{bits}.bin"));
            let (paths, fp) = export_weights(&m, &path).unwrap();
            assert_eq!(load_weights(&path).unwrap(), m);
            let hex = fs::read_to_string(paths.hex).unwrap();
            assert_eq!(hex.split_whitespace().count(), fp.file_bytes);
            let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(paths.footprint).unwrap()).unwrap();
            assert_eq!(json["weights"], 1600);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = to_bytes(&model(ModelKind::Mgu, 4));
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }

    proptest! {
        #[test]
        fn pack_roundtrip(bits in 2u32..9, raw in proptest::collection::vec(any::<i64>(), 0..50)) {
            let s = (1i64 << (bits - 1)) - 1;
            let codes: Vec<i64> = raw.iter().map(|v| v.rem_euclid(2 * s + 1) - s).collect();
            let packed = pack_codes(codes.iter().copied(), bits);
            prop_assert_eq!(packed.len(), payload_bytes(codes.len(), bits));
            prop_assert_eq!(unpack_codes(&packed, bits, codes.len()).unwrap(), codes);
        }

        #[test]
        fn theta_roundtrip(bits in 3u32..9, code in 0i64..765) {
            let code = code % (3 * unsigned_levels(bits) + 1);
            prop_assert_eq!(theta_from_q824(theta_to_q824(code, bits), bits), code);
        }
    }
}
