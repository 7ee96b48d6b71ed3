//! Wire protocol v1: newline-delimited JSON over a byte stream.
//!
//! ```text
//! → {"id":1,"op":"info"}
//! ← {"id":1,"ok":true,"latent_dim":200,"embedding_dim":128,"image_shape":[3,64,64],"name":"...","fused":true}
//! → {"id":2,"op":"generate_embed","latents":[[...],...]}
//! ← {"id":2,"ok":true,"embeddings":[[...],...]}
//! → {"id":3,"op":"generate","latent":[...]}
//! ← {"id":3,"ok":true,"shape":[3,64,64],"data_b64":"..."}
//! → {"id":4,"op":"embed","shape":[3,64,64],"data_b64":"..."}
//! ← {"id":4,"ok":true,"embedding":[...]}
//! ← {"id":n,"ok":false,"error":"message"}
//! ```
//!
//! Tensor payloads are base64 of little-endian `f32`. Entries of
//! `embeddings` may also be objects `{"index": i, "embedding": [...]}` or
//! `{"index": i, "error": "..."}`, which lets a server answer items out of
//! order or fail single items.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::BackendInfo;
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Info,
    GenerateEmbed { latents: Vec<Vec<f32>> },
    Generate { latent: Vec<f32> },
    Embed { shape: [usize; 3], data_b64: String },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Info => "info",
            Op::GenerateEmbed { .. } => "generate_embed",
            Op::Generate { .. } => "generate",
            Op::Embed { .. } => "embed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    #[serde(flatten)]
    pub op: Op,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serialization cannot fail")
    }
}

pub fn encode_f32_b64(values: impl IntoIterator<Item = f32>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32_b64(data: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(data.trim())
        .map_err(|e| Error::Protocol(format!("bad base64 tensor payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Protocol(format!(
            "tensor payload of {} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// A parsed reply whose id has not been checked yet.
#[derive(Debug)]
pub struct Reply {
    pub id: Option<u64>,
    pub body: Value,
}

impl Reply {
    pub fn parse(line: &str) -> Result<Self> {
        let body: Value = serde_json::from_str(line)
            .map_err(|e| Error::Protocol(format!("reply is not valid JSON: {e}")))?;
        if !body.is_object() {
            return Err(Error::Protocol("reply is not a JSON object".into()));
        }
        let id = body.get("id").and_then(Value::as_u64);
        Ok(Self { id, body })
    }

    /// Checks `ok`; an `ok:false` reply becomes a backend error.
    pub fn into_ok(self) -> Result<Value> {
        match self.body.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(self.body),
            Some(false) => Err(Error::backend(
                self.body
                    .get("error")
                    .and_then(Value::as_str)
                    .unwrap_or("server reported failure without a message"),
            )),
            None => Err(missing("reply", "ok")),
        }
    }
}

pub fn missing(what: &str, field: &str) -> Error {
    Error::Protocol(format!("{what} missing field \"{field}\""))
}

pub fn field<'a>(body: &'a Value, what: &str, name: &str) -> Result<&'a Value> {
    body.get(name).ok_or_else(|| missing(what, name))
}

pub fn as_usize(v: &Value, what: &str, name: &str) -> Result<usize> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| {
        Error::Protocol(format!(
            "{what} field \"{name}\" is not a non-negative integer"
        ))
    })
}

pub fn as_shape(v: &Value, what: &str, name: &str) -> Result<[usize; 3]> {
    let arr = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
        Error::Protocol(format!("{what} field \"{name}\" is not a 3-element shape"))
    })?;
    Ok([
        as_usize(&arr[0], what, name)?,
        as_usize(&arr[1], what, name)?,
        as_usize(&arr[2], what, name)?,
    ])
}

pub fn as_f32_vec(v: &Value, what: &str, name: &str) -> Result<Vec<f32>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Protocol(format!("{what} field \"{name}\" is not an array")))?;
    arr.iter()
        .map(|x| {
            x.as_f64().map(|f| f as f32).ok_or_else(|| {
                Error::Protocol(format!("{what} field \"{name}\" holds a non-number"))
            })
        })
        .collect()
}

pub fn parse_info(body: &Value) -> Result<BackendInfo> {
    const WHAT: &str = "info reply";
    let info = BackendInfo {
        latent_dim: as_usize(field(body, WHAT, "latent_dim")?, WHAT, "latent_dim")?,
        embedding_dim: as_usize(field(body, WHAT, "embedding_dim")?, WHAT, "embedding_dim")?,
        image_shape: as_shape(field(body, WHAT, "image_shape")?, WHAT, "image_shape")?,
        backend_name: body
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("remote")
            .to_string(),
        supports_fused_generate_embed: body.get("fused").and_then(Value::as_bool).unwrap_or(false),
        concurrent: false,
    };
    info.validate()
        .map_err(|e| Error::Protocol(format!("{WHAT} advertises invalid dimensions: {e}")))?;
    Ok(info)
}

/// `info` reply body for a server advertising `info`.
pub fn info_reply(id: u64, info: &BackendInfo) -> Value {
    json!({
        "id": id,
        "ok": true,
        "latent_dim": info.latent_dim,
        "embedding_dim": info.embedding_dim,
        "image_shape": info.image_shape,
        "name": info.backend_name,
        "fused": info.supports_fused_generate_embed,
    })
}

pub fn error_reply(id: Option<u64>, message: &str) -> Value {
    json!({"id": id, "ok": false, "error": message})
}
