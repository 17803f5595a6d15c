//! Flat binary files for trained parameters.
//!
//! All integers are little-endian.
//!
//! | bytes   | field                                               |
//! |---------|-----------------------------------------------------|
//! | 4       | magic `LGPB`                                        |
//! | 4       | version, `u32` = 1                                  |
//! | 4       | kind, `u32`: 1 = MLP, 2 = transformer layer         |
//! | 4       | flags, `u32`: bit 0 = logits scaled by `1/√d_head`  |
//! | 4       | tensor count `k`, `u32`                             |
//! | 16·k    | per tensor: rows `u64`, cols `u64`                  |
//! | 8·Σrc   | all tensor entries as `f64`, row-major, in order    |
//!
//! Tensor order for an MLP: `w1`, `b1` (1 × h), `w2`, `b2` (1 × d_out).
//! For a transformer layer: `q, k, v, o` for each head in turn, then
//! `ln_gain` and `ln_offset` (1 × d), the four MLP tensors, `readout`
//! (d × 1) and `readout_bias` (1 × 1).

use std::fs;
use std::path::Path;

use crate::attention::{HeadParams, TransformerParams};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::numkit::{Matrix, Scalar};

pub const PARAMS_MAGIC: &[u8; 4] = b"LGPB";
pub const PARAMS_VERSION: u32 = 1;
const KIND_MLP: u32 = 1;
const KIND_TRANSFORMER: u32 = 2;
const FLAG_SCALE_LOGITS: u32 = 1;

fn encode<T: Scalar>(kind: u32, flags: u32, tensors: &[(usize, usize, &[T])]) -> Vec<u8> {
    let total: usize = tensors.iter().map(|t| t.2.len()).sum();
    let mut out = Vec::with_capacity(20 + 16 * tensors.len() + 8 * total);
    out.extend_from_slice(PARAMS_MAGIC);
    for v in [PARAMS_VERSION, kind, flags, tensors.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &(r, c, _) in tensors {
        out.extend_from_slice(&(r as u64).to_le_bytes());
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for (_, _, data) in tensors {
        for v in data.iter() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Decoded<T> {
    flags: u32,
    tensors: Vec<Matrix<T>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(bad("parameter file is truncated"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn u32_at(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().expect("4 bytes")))
}

fn u64_at(bytes: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, 8)?.try_into().expect("8 bytes")))
}

fn decode<T: Scalar>(mut bytes: &[u8], kind: u32) -> Result<Decoded<T>> {
    let b = &mut bytes;
    if take(b, 4)? != PARAMS_MAGIC {
        return Err(bad("not a parameter file (bad magic)"));
    }
    let version = u32_at(b)?;
    if version != PARAMS_VERSION {
        return Err(bad(format!("unsupported parameter file version {version}")));
    }
    let found = u32_at(b)?;
    if found != kind {
        return Err(bad(format!("parameter file holds kind {found}, expected {kind}")));
    }
    let flags = u32_at(b)?;
    let count = u32_at(b)? as usize;
    let mut shapes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let r = usize::try_from(u64_at(b)?).map_err(|_| bad("tensor too large"))?;
        let c = usize::try_from(u64_at(b)?).map_err(|_| bad("tensor too large"))?;
        shapes.push((r, c));
    }
    let mut tensors = Vec::with_capacity(count);
    for (r, c) in shapes {
        let len = r.checked_mul(c).and_then(|v| v.checked_mul(8)).ok_or_else(|| bad("tensor too large"))?;
        let data = take(b, len)?
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        tensors.push(Matrix::from_vec(r, c, data)?);
    }
    if !b.is_empty() {
        return Err(bad(format!("{} trailing bytes after payload", b.len())));
    }
    Ok(Decoded { flags, tensors })
}

fn row_of<T: Scalar>(m: Matrix<T>, what: &str) -> Result<Vec<T>> {
    if m.rows() != 1 {
        return Err(bad(format!("{what} must be stored as a single row, got {:?}", m.shape())));
    }
    Ok(m.into_vec())
}

fn mlp_entries<T: Scalar>(p: &MlpParams<T>) -> [(usize, usize, &[T]); 4] {
    [
        (p.w1.rows(), p.w1.cols(), p.w1.as_slice()),
        (1, p.b1.len(), &p.b1),
        (p.w2.rows(), p.w2.cols(), p.w2.as_slice()),
        (1, p.b2.len(), &p.b2),
    ]
}

fn mlp_from<T: Scalar>(it: &mut impl Iterator<Item = Matrix<T>>) -> Result<MlpParams<T>> {
    let mut next = || it.next().ok_or_else(|| bad("too few tensors"));
    let w1 = next()?;
    let b1 = row_of(next()?, "b1")?;
    let w2 = next()?;
    let b2 = row_of(next()?, "b2")?;
    MlpParams::from_parts(w1, b1, w2, b2)
}

pub fn encode_mlp<T: Scalar>(p: &MlpParams<T>) -> Vec<u8> {
    encode(KIND_MLP, 0, &mlp_entries(p))
}

pub fn decode_mlp<T: Scalar>(bytes: &[u8]) -> Result<MlpParams<T>> {
    let d = decode::<T>(bytes, KIND_MLP)?;
    if d.tensors.len() != 4 {
        return Err(bad(format!("mlp file holds {} tensors, expected 4", d.tensors.len())));
    }
    mlp_from(&mut d.tensors.into_iter())
}

pub fn encode_transformer<T: Scalar>(p: &TransformerParams<T>) -> Vec<u8> {
    let d = p.d_model();
    let mut entries: Vec<(usize, usize, &[T])> = Vec::new();
    for h in &p.heads {
        for m in [&h.q, &h.k, &h.v, &h.o] {
            entries.push((m.rows(), m.cols(), m.as_slice()));
        }
    }
    entries.push((1, d, &p.ln_gain));
    entries.push((1, p.ln_offset.len(), &p.ln_offset));
    entries.extend(mlp_entries(&p.mlp));
    entries.push((p.readout.rows(), p.readout.cols(), p.readout.as_slice()));
    entries.push((1, 1, std::slice::from_ref(&p.readout_bias)));
    let flags = if p.scale_logits { FLAG_SCALE_LOGITS } else { 0 };
    encode(KIND_TRANSFORMER, flags, &entries)
}

pub fn decode_transformer<T: Scalar>(bytes: &[u8]) -> Result<TransformerParams<T>> {
    let d = decode::<T>(bytes, KIND_TRANSFORMER)?;
    let k = d.tensors.len();
    if k < 12 || (k - 8) % 4 != 0 {
        return Err(bad(format!("transformer file holds {k} tensors")));
    }
    let n_heads = (k - 8) / 4;
    let mut it = d.tensors.into_iter();
    let heads = (0..n_heads)
        .map(|_| HeadParams {
            q: it.next().expect("counted"),
            k: it.next().expect("counted"),
            v: it.next().expect("counted"),
            o: it.next().expect("counted"),
        })
        .collect();
    let ln_gain = row_of(it.next().expect("counted"), "ln_gain")?;
    let ln_offset = row_of(it.next().expect("counted"), "ln_offset")?;
    let mlp = mlp_from(&mut it)?;
    let readout = it.next().expect("counted");
    let bias = it.next().expect("counted");
    if bias.shape() != (1, 1) {
        return Err(bad(format!("readout_bias has shape {:?}", bias.shape())));
    }
    let p = TransformerParams {
        heads,
        ln_gain,
        ln_offset,
        mlp,
        readout,
        readout_bias: bias[(0, 0)],
        scale_logits: d.flags & FLAG_SCALE_LOGITS != 0,
    };
    p.validate()?;
    Ok(p)
}

pub fn save_mlp<T: Scalar>(path: impl AsRef<Path>, p: &MlpParams<T>) -> Result<()> {
    Ok(fs::write(path, encode_mlp(p))?)
}

pub fn load_mlp<T: Scalar>(path: impl AsRef<Path>) -> Result<MlpParams<T>> {
    decode_mlp(&fs::read(path)?)
}

pub fn save_transformer<T: Scalar>(path: impl AsRef<Path>, p: &TransformerParams<T>) -> Result<()> {
    Ok(fs::write(path, encode_transformer(p))?)
}

pub fn load_transformer<T: Scalar>(path: impl AsRef<Path>) -> Result<TransformerParams<T>> {
    decode_transformer(&fs::read(path)?)
}
