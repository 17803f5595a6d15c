//! Attention-trace files dumped from external models, and the per-layer ID
//! series computed from them.
//!
//! # File layout
//!
//! A trace is a UTF-8 manifest followed by a binary payload:
//!
//! ```text
//! LGTRACE1
//! model=<name>
//! layers=<L>
//! heads=<H>
//! seq_len=<n>
//! dtype=f32le
//! payload_offset=<20-digit zero-padded byte offset>
//! <empty line>
//! <payload>
//! ```
//!
//! Every manifest line ends in `\n`. `payload_offset` is the absolute byte
//! offset of the payload, which is exactly the length of the manifest
//! including the empty line. The payload holds `L·H` matrices of `n × n`
//! little-endian `f32` values, row-major, ordered layer-major then head-minor,
//! and its length must be exactly `L·H·n·n·4` bytes. Each matrix must be
//! lower-triangular with exact zeros above the diagonal, nonnegative, and
//! have rows summing to `1 ± 1e-4`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionTensor;
use crate::error::{Error, Result};
use crate::geometry::{check_epsilon, relative_id_change, IdProfile, RowPolicy};
use crate::numkit::{Matrix, Scalar};

pub const TRACE_MAGIC: &str = "LGTRACE1";
pub const TRACE_DTYPE: &str = "f32le";
/// Row-sum slack for single-precision dumps.
pub const TRACE_ROW_SUM_TOL: f64 = 1e-4;
const OFFSET_WIDTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub model: String,
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
}

impl TraceManifest {
    pub fn payload_len(&self) -> usize {
        self.layers * self.heads * self.seq_len * self.seq_len * 4
    }

    fn header(&self) -> Result<String> {
        if self.model.contains(['\n', '\r']) {
            return Err(Error::Format("model name must be a single line".into()));
        }
        let body = format!(
            "{TRACE_MAGIC}\nmodel={}\nlayers={}\nheads={}\nseq_len={}\ndtype={TRACE_DTYPE}\npayload_offset=",
            self.model, self.layers, self.heads, self.seq_len
        );
        let offset = body.len() + OFFSET_WIDTH + 2;
        Ok(format!("{body}{offset:0width$}\n\n", width = OFFSET_WIDTH))
    }
}

/// A parsed trace with maps promoted to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub manifest: TraceManifest,
    pub layers: Vec<AttentionTensor<f64>>,
}

fn check_shapes<T: Scalar>(manifest: &TraceManifest, tensors: &[AttentionTensor<T>]) -> Result<()> {
    if tensors.len() != manifest.layers {
        return Err(Error::Format(format!(
            "manifest declares {} layers, got {}",
            manifest.layers,
            tensors.len()
        )));
    }
    for (l, t) in tensors.iter().enumerate() {
        if t.heads() != manifest.heads || t.n() != manifest.seq_len {
            return Err(Error::Format(format!(
                "layer {l} has {} heads of length {}, manifest declares {} of length {}",
                t.heads(),
                t.n(),
                manifest.heads,
                manifest.seq_len
            )));
        }
    }
    Ok(())
}

/// Serialises `tensors` after validating them against the manifest.
pub fn write_trace<T: Scalar, W: Write>(
    mut w: W,
    manifest: &TraceManifest,
    tensors: &[AttentionTensor<T>],
) -> Result<()> {
    check_shapes(manifest, tensors)?;
    for (l, t) in tensors.iter().enumerate() {
        t.validate_layer(l, TRACE_ROW_SUM_TOL)?;
    }
    let mut buf = manifest.header()?.into_bytes();
    buf.reserve(manifest.payload_len());
    for t in tensors {
        for m in t.maps() {
            for &v in m.as_slice() {
                buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_trace_file<T: Scalar>(
    path: impl AsRef<Path>,
    manifest: &TraceManifest,
    tensors: &[AttentionTensor<T>],
) -> Result<()> {
    let f = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_trace(&mut w, manifest, tensors)?;
    w.flush()?;
    Ok(())
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<(TraceManifest, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fmt_err("manifest is not terminated by an empty line"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| fmt_err("manifest is not UTF-8"))?;
        pos += end + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line);
    }
    if lines.first() != Some(&TRACE_MAGIC) {
        return Err(fmt_err(format!("missing {TRACE_MAGIC} magic line")));
    }
    let get = |key: &str| -> Result<&str> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| fmt_err(format!("manifest lacks `{key}`")))
    };
    let num = |key: &str, v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| fmt_err(format!("`{key}` is not a count: {v:?}")))
    };
    let model = get("model")?.to_string();
    let layers = num("layers", get("layers")?)?;
    let heads = num("heads", get("heads")?)?;
    let seq_len = num("seq_len", get("seq_len")?)?;
    let dtype = get("dtype")?;
    if dtype != TRACE_DTYPE {
        return Err(fmt_err(format!("unsupported dtype {dtype:?}")));
    }
    let offset = num("payload_offset", get("payload_offset")?)?;
    if offset != pos {
        return Err(fmt_err(format!("payload_offset {offset} but manifest ends at byte {pos}")));
    }
    Ok((
        TraceManifest {
            model,
            layers,
            heads,
            seq_len,
        },
        pos,
    ))
}

/// Parses and validates a trace held in memory.
pub fn parse_trace(bytes: &[u8]) -> Result<Trace> {
    let (manifest, offset) = parse_header(bytes)?;
    let payload = &bytes[offset..];
    let expected = manifest
        .layers
        .checked_mul(manifest.heads)
        .and_then(|v| v.checked_mul(manifest.seq_len))
        .and_then(|v| v.checked_mul(manifest.seq_len))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| fmt_err("manifest dimensions overflow"))?;
    if payload.len() != expected {
        return Err(fmt_err(format!(
            "payload is {} bytes, manifest implies {expected}",
            payload.len()
        )));
    }
    let n = manifest.seq_len;
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut layers = Vec::with_capacity(manifest.layers);
    for l in 0..manifest.layers {
        let maps = (0..manifest.heads)
            .map(|_| Matrix::from_vec(n, n, values.by_ref().take(n * n).collect()))
            .collect::<Result<Vec<_>>>()?;
        let t = AttentionTensor::from_maps_unchecked(maps);
        t.validate_layer(l, TRACE_ROW_SUM_TOL)?;
        layers.push(t);
    }
    Ok(Trace { manifest, layers })
}

pub fn read_trace<R: Read>(mut r: R) -> Result<Trace> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_trace(&bytes)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace> {
    parse_trace(&fs::read(path)?)
}

/// Per-layer aggregate ID of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerIdSeries {
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub policy: RowPolicy,
}

/// One row of the ID CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerIdRecord {
    pub layer: usize,
    pub id: f64,
    pub epsilon: f64,
    pub row_policy: RowPolicy,
}

impl LayerIdSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn records(&self) -> Vec<LayerIdRecord> {
        self.values
            .iter()
            .enumerate()
            .map(|(layer, &id)| LayerIdRecord {
                layer,
                id,
                epsilon: self.epsilon,
                row_policy: self.policy,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in self.records() {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Trace {
    pub fn profile(&self, epsilon: f64) -> Result<IdProfile> {
        IdProfile::compute(&self.layers, epsilon)
    }
}

/// Head-summed ID of every layer under `policy`.
pub fn id_profile(trace: &Trace, epsilon: f64, policy: RowPolicy) -> Result<LayerIdSeries> {
    check_epsilon(epsilon)?;
    let p = trace.profile(epsilon)?;
    Ok(LayerIdSeries {
        values: (0..p.n_layers()).map(|l| p.aggregate(l, policy)).collect(),
        epsilon,
        policy,
    })
}

/// Percentage ID change of `variant` relative to `base`, layer by layer.
pub fn relative_id_changes(base: &Trace, variant: &Trace, epsilon: f64, policy: RowPolicy) -> Result<Vec<f64>> {
    if base.layers.len() != variant.layers.len() {
        return Err(Error::param(format!(
            "traces have {} and {} layers",
            base.layers.len(),
            variant.layers.len()
        )));
    }
    let (pb, pv) = (base.profile(epsilon)?, variant.profile(epsilon)?);
    (0..pb.n_layers())
        .map(|l| relative_id_change(&pb, &pv, l, policy))
        .collect()
}
