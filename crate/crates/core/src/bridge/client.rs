use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};
use serde_json::Value;

use super::protocol::{
    as_f32_vec, as_shape, decode_f32_b64, encode_f32_b64, field, parse_info, Op, Reply, Request,
};
use super::transport::Connection;
use super::{BridgeConfig, Transport};
use crate::backend::{Backend, BackendInfo, Embedding, ImageTensor};
use crate::error::{Error, Result};
use crate::latent::{check_dim, LatentVector};
use crate::scalar::Scalar;

struct State {
    conn: Option<Connection>,
    next_id: u64,
}

/// Backend served by an external model process over protocol v1.
///
/// Requests are strictly lockstep on a single connection. A request that
/// fails at the transport level is retried once on a fresh connection.
pub struct BridgeClient {
    config: BridgeConfig,
    info: BackendInfo,
    state: Mutex<State>,
}

impl BridgeClient {
    /// Connects and performs the `info` handshake.
    pub fn connect(config: BridgeConfig) -> Result<Self> {
        config.validate()?;
        let mut client = Self {
            info: BackendInfo {
                latent_dim: 0,
                embedding_dim: 0,
                image_shape: [0, 0, 0],
                backend_name: String::new(),
                supports_fused_generate_embed: false,
                concurrent: false,
            },
            state: Mutex::new(State {
                conn: None,
                next_id: 1,
            }),
            config,
        };
        client.info = client.handshake()?;
        debug!("bridge handshake: {:?}", client.info);
        Ok(client)
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    fn open(&self) -> Result<Connection> {
        let timeout = self.timeout();
        match &self.config.transport {
            Transport::Tcp { address } => Connection::tcp(address, timeout),
            Transport::Stdio { command } => Connection::spawn(command),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.config.timeout_ms)
    }

    fn exchange(&self, state: &mut State, op: &Op) -> Result<Value> {
        if state.conn.is_none() {
            state.conn = Some(self.open()?);
        }
        let id = state.next_id;
        state.next_id += 1;
        let conn = state.conn.as_mut().unwrap();
        conn.send_line(&Request { id, op: op.clone() }.to_line())?;
        let line = conn.recv_line(self.timeout())?;
        let reply = Reply::parse(&line)?;
        match reply.id {
            Some(got) if got == id => reply.into_ok(),
            Some(got) => Err(Error::Protocol(format!(
                "reply id {got} does not match pending request {id}"
            ))),
            None => Err(Error::Protocol(format!(
                "reply to request {id} carries no id"
            ))),
        }
    }

    /// Sends `op` and returns the `ok:true` reply body.
    fn call(&self, op: Op) -> Result<Value> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        match self.exchange(&mut state, &op) {
            Err(Error::Transport(msg)) => {
                warn!("{} request failed ({msg}); reconnecting once", op.name());
                state.conn = None;
                self.exchange(&mut state, &op).inspect_err(|_| {
                    state.conn = None;
                })
            }
            Err(Error::Protocol(msg)) => {
                // the stream can no longer be trusted to be in lockstep
                state.conn = None;
                Err(Error::Protocol(msg))
            }
            other => other,
        }
    }

    pub fn handshake(&self) -> Result<BackendInfo> {
        parse_info(&self.call(Op::Info)?)
    }

    /// Embeddings for a batch, split into requests of at most `max_batch`.
    pub fn remote_generate_embed(&self, zs: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(zs.len());
        for (k, chunk) in zs.chunks(self.config.max_batch).enumerate() {
            let offset = k * self.config.max_batch;
            let body = self
                .call(Op::GenerateEmbed {
                    latents: chunk.to_vec(),
                })
                .map_err(|e| e.at_index(offset))?;
            out.extend(parse_embeddings(&body, chunk.len(), offset)?);
        }
        Ok(out)
    }

    pub fn remote_generate(&self, z: Vec<f32>) -> Result<([usize; 3], Vec<f32>)> {
        let body = self.call(Op::Generate { latent: z })?;
        const WHAT: &str = "generate reply";
        let shape = as_shape(field(&body, WHAT, "shape")?, WHAT, "shape")?;
        let data = field(&body, WHAT, "data_b64")?.as_str().ok_or_else(|| {
            Error::Protocol("generate reply field \"data_b64\" is not a string".into())
        })?;
        Ok((shape, decode_f32_b64(data)?))
    }

    pub fn remote_embed(&self, shape: [usize; 3], data: &[f32]) -> Result<Vec<f32>> {
        let body = self.call(Op::Embed {
            shape,
            data_b64: encode_f32_b64(data.iter().copied()),
        })?;
        as_f32_vec(
            field(&body, "embed reply", "embedding")?,
            "embed reply",
            "embedding",
        )
    }
}

fn parse_embeddings(body: &Value, expected: usize, offset: usize) -> Result<Vec<Vec<f32>>> {
    const WHAT: &str = "generate_embed reply";
    let items = field(body, WHAT, "embeddings")?
        .as_array()
        .ok_or_else(|| Error::Protocol(format!("{WHAT} field \"embeddings\" is not an array")))?;
    if items.len() != expected {
        return Err(Error::Protocol(format!(
            "{WHAT} has {} embeddings for {expected} latents",
            items.len()
        )));
    }
    let mut slots: Vec<Option<Vec<f32>>> = vec![None; expected];
    for (pos, item) in items.iter().enumerate() {
        let (index, values) = match item {
            Value::Array(_) => (pos, as_f32_vec(item, WHAT, "embeddings")?),
            Value::Object(obj) => {
                let index = obj
                    .get("index")
                    .and_then(Value::as_u64)
                    .map(|i| i as usize)
                    .ok_or_else(|| Error::Protocol(format!("{WHAT} item {pos} has no index")))?;
                if let Some(err) = obj.get("error") {
                    return Err(Error::Backend {
                        index: Some(offset + index),
                        message: err.as_str().unwrap_or("item failed").to_string(),
                    });
                }
                let emb = obj.get("embedding").ok_or_else(|| {
                    Error::Protocol(format!("{WHAT} item {pos} has no embedding"))
                })?;
                (index, as_f32_vec(emb, WHAT, "embedding")?)
            }
            _ => {
                return Err(Error::Protocol(format!(
                    "{WHAT} item {pos} is neither an array nor an object"
                )))
            }
        };
        let slot = slots
            .get_mut(index)
            .ok_or_else(|| Error::Protocol(format!("{WHAT} item index {index} out of range")))?;
        if slot.replace(values).is_some() {
            return Err(Error::Protocol(format!("{WHAT} repeats index {index}")));
        }
    }
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}

fn to_f32<T: Scalar>(z: &LatentVector<T>) -> Vec<f32> {
    z.iter().map(|v| v.as_f64() as f32).collect()
}

impl<T: Scalar> Backend<T> for BridgeClient {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        check_dim("latent", self.info.latent_dim, z.dim())?;
        let (shape, data) = self.remote_generate(to_f32(z))?;
        if shape != self.info.image_shape {
            return Err(Error::Protocol(format!(
                "generated image shape {shape:?} differs from advertised {:?}",
                self.info.image_shape
            )));
        }
        ImageTensor::new(shape, data.into_iter().map(|v| T::lit(v as f64)).collect())
            .map_err(|e| Error::Protocol(format!("generated image rejected: {e}")))
    }

    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        if x.shape() != self.info.image_shape {
            return Err(Error::config(format!(
                "image shape {:?} does not match backend shape {:?}",
                x.shape(),
                self.info.image_shape
            )));
        }
        let data: Vec<f32> = x.values().iter().map(|v| v.as_f64() as f32).collect();
        let e = self.remote_embed(x.shape(), &data)?;
        check_dim("remote embedding", self.info.embedding_dim, e.len())
            .map_err(|e| Error::Protocol(e.to_string()))?;
        Embedding::new(e.into_iter().map(|v| T::lit(v as f64)).collect())
            .map_err(|e| Error::Protocol(format!("embedding rejected: {e}")))
    }

    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        if !self.info.supports_fused_generate_embed {
            return zs
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    self.generate(z)
                        .and_then(|x| self.embed(&x))
                        .map_err(|e| e.at_index(i))
                })
                .collect();
        }
        for z in zs {
            check_dim("latent", self.info.latent_dim, z.dim())?;
        }
        let raw = self.remote_generate_embed(&zs.iter().map(to_f32).collect::<Vec<_>>())?;
        raw.into_iter()
            .enumerate()
            .map(|(i, e)| {
                if e.len() != self.info.embedding_dim {
                    return Err(Error::Protocol(format!(
                        "embedding {i} has length {}, expected {}",
                        e.len(),
                        self.info.embedding_dim
                    )));
                }
                Embedding::new(e.into_iter().map(|v| T::lit(v as f64)).collect())
                    .map_err(|err| Error::Protocol(format!("embedding {i} rejected: {err}")))
            })
            .collect()
    }
}
