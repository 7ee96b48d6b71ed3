//! Latent file persistence.
//!
//! Binary layout (little-endian): `b"LVEC"`, `u32` version (= 1), `u32` dim,
//! `u32` count, then `count * dim` IEEE-754 `f32` values, vector-major.
//! The JSON alternative is `{"dim": D, "vectors": [[...], ...]}`.
//! Readers sniff the format from the first bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVector;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LVEC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FileFormat {
    #[default]
    Binary,
    Json,
}

#[derive(Serialize, Deserialize)]
struct JsonLatents {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

fn uniform_dim<T: Scalar>(vectors: &[LatentVector<T>]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::config("cannot write an empty latent file"))?;
    let dim = first.dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::Dimension {
            what: "latent file vectors",
            expected: dim,
            found: v.dim(),
        });
    }
    Ok(dim)
}

pub fn encode_binary<T: Scalar>(vectors: &[LatentVector<T>]) -> Result<Vec<u8>> {
    let dim = uniform_dim(vectors)?;
    let mut buf = Vec::with_capacity(HEADER_LEN + vectors.len() * dim * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for v in vectors {
        for x in v.iter() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn encode_json<T: Scalar>(vectors: &[LatentVector<T>]) -> Result<Vec<u8>> {
    let dim = uniform_dim(vectors)?;
    let doc = JsonLatents {
        dim,
        vectors: vectors
            .iter()
            .map(|v| v.iter().map(|x| x.as_f64() as f32).collect())
            .collect(),
    };
    let mut out = serde_json::to_vec(&doc)?;
    out.push(b'\n');
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes
        .get(at..at + 4)
        .ok_or_else(|| format_err(bytes.len(), "truncated header"))?;
    Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
}

pub fn decode_binary<T: Scalar>(bytes: &[u8]) -> Result<Vec<LatentVector<T>>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected \"LVEC\""));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let dim = read_u32(bytes, 8)? as usize;
    if dim == 0 {
        return Err(format_err(8, "dimension must be at least 1"));
    }
    let count = read_u32(bytes, 12)? as usize;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(12, "header count overflows"))?;
    if bytes.len() != expected {
        let at = bytes.len().min(expected);
        return Err(format_err(
            at,
            format!(
                "payload length {} disagrees with header ({count} x {dim} f32 values need {})",
                bytes.len() - HEADER_LEN,
                expected - HEADER_LEN
            ),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for (k, raw) in bytes[HEADER_LEN..].chunks_exact(dim * 4).enumerate() {
        let mut values = Vec::with_capacity(dim);
        for (j, w) in raw.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(w.try_into().unwrap());
            if !x.is_finite() {
                return Err(format_err(
                    HEADER_LEN + (k * dim + j) * 4,
                    "non-finite value",
                ));
            }
            values.push(T::lit(x as f64));
        }
        out.push(LatentVector::new(values)?);
    }
    Ok(out)
}

pub fn decode_json<T: Scalar>(bytes: &[u8]) -> Result<Vec<LatentVector<T>>> {
    let doc: JsonLatents = serde_json::from_slice(bytes)
        .map_err(|e| format_err(0, format!("invalid latent JSON: {e}")))?;
    if doc.dim == 0 {
        return Err(format_err(0, "dimension must be at least 1"));
    }
    doc.vectors
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            if v.len() != doc.dim {
                return Err(format_err(
                    0,
                    format!("vector {k} has length {}, header says {}", v.len(), doc.dim),
                ));
            }
            LatentVector::new(v.into_iter().map(|x| T::lit(x as f64)).collect())
                .map_err(|e| format_err(0, format!("vector {k}: {e}")))
        })
        .collect()
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Vec<LatentVector<T>>> {
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'{') => decode_json(bytes),
        _ => decode_binary(bytes),
    }
}

pub fn write_latents<T: Scalar>(
    path: impl AsRef<Path>,
    vectors: &[LatentVector<T>],
    format: FileFormat,
) -> Result<()> {
    let bytes = match format {
        FileFormat::Binary => encode_binary(vectors)?,
        FileFormat::Json => encode_json(vectors)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_latents<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LatentVector<T>>> {
    decode(&fs::read(path)?)
}
