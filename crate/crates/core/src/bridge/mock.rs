//! In-process protocol v1 server for conformance tests.
//!
//! [`MockServer`] listens on a loopback port and feeds every request line to
//! a [`Handler`]. [`SyntheticHandler`] answers like a model server hosting the
//! synthetic backend (outputs rounded to `f32`); closures can script any other
//! behaviour, including malformed or missing replies.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

use super::protocol::{decode_f32_b64, encode_f32_b64, error_reply, info_reply, Op, Request};
use super::{BridgeConfig, Transport};
use crate::backend::{Backend, ImageTensor};
use crate::error::Result;
use crate::latent::LatentVector;
use crate::synthetic::{SyntheticModel, SyntheticSpec};

/// What the server does with one request line.
#[derive(Clone, Debug)]
pub enum Scripted {
    Reply(Value),
    /// Sent verbatim, for malformed-reply tests.
    Raw(String),
    /// Never answer this request.
    Silent,
    /// Close the connection without answering.
    Hangup,
}

pub trait Handler: Send + 'static {
    fn respond(&mut self, line: &str) -> Scripted;
}

impl<F: FnMut(&str) -> Scripted + Send + 'static> Handler for F {
    fn respond(&mut self, line: &str) -> Scripted {
        self(line)
    }
}

/// Serves one connection until EOF or a scripted hangup.
pub fn serve_stream(
    reader: impl Read,
    mut writer: impl Write,
    handler: &mut dyn Handler,
) -> io::Result<()> {
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let out = match handler.respond(&line) {
            Scripted::Reply(v) => v.to_string(),
            Scripted::Raw(s) => s,
            Scripted::Silent => continue,
            Scripted::Hangup => return Ok(()),
        };
        writer.write_all(out.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Answers protocol v1 from an in-process synthetic model.
pub struct SyntheticHandler {
    model: SyntheticModel<f64>,
}

impl SyntheticHandler {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        Ok(Self {
            model: SyntheticModel::new(spec)?,
        })
    }

    pub fn model(&self) -> &SyntheticModel<f64> {
        &self.model
    }

    fn latent(&self, v: &[f32]) -> Result<LatentVector<f64>> {
        LatentVector::new(v.iter().map(|&x| x as f64).collect())
    }

    fn run(&self, id: u64, op: Op) -> Result<Value> {
        let rounded = |v: &[f64]| -> Vec<f32> { v.iter().map(|&x| x as f32).collect() };
        Ok(match op {
            Op::Info => info_reply(id, self.model.info()),
            Op::GenerateEmbed { latents } => {
                let zs = latents
                    .iter()
                    .map(|v| self.latent(v))
                    .collect::<Result<Vec<_>>>()?;
                let es = self.model.generate_embed(&zs)?;
                let out: Vec<Vec<f32>> = es.iter().map(|e| rounded(e.as_slice())).collect();
                json!({"id": id, "ok": true, "embeddings": out})
            }
            Op::Generate { latent } => {
                let x = self.model.generate(&self.latent(&latent)?)?;
                json!({
                    "id": id,
                    "ok": true,
                    "shape": x.shape(),
                    "data_b64": encode_f32_b64(rounded(x.values())),
                })
            }
            Op::Embed { shape, data_b64 } => {
                let data = decode_f32_b64(&data_b64)?;
                let x = ImageTensor::new(shape, data.into_iter().map(|v| v as f64).collect())?;
                let e = self.model.embed(&x)?;
                json!({"id": id, "ok": true, "embedding": rounded(e.as_slice())})
            }
        })
    }

    /// Reply for one request line.
    pub fn answer(&self, line: &str) -> Value {
        let raw: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_reply(None, &format!("malformed request: {e}")),
        };
        let id = raw.get("id").and_then(Value::as_u64);
        let known = matches!(
            raw.get("op").and_then(Value::as_str),
            Some("info" | "generate" | "embed" | "generate_embed")
        );
        if !known {
            return error_reply(id, "unknown op");
        }
        let req: Request = match serde_json::from_value(raw) {
            Ok(r) => r,
            Err(e) => return error_reply(id, &format!("malformed request: {e}")),
        };
        self.run(req.id, req.op)
            .unwrap_or_else(|e| error_reply(Some(req.id), &e.to_string()))
    }
}

impl Handler for SyntheticHandler {
    fn respond(&mut self, line: &str) -> Scripted {
        Scripted::Reply(self.answer(line))
    }
}

/// Loopback TCP server running a [`Handler`] on a background thread.
///
/// Connections are served one at a time, in arrival order.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn spawn(mut handler: impl Handler) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let connections = Arc::new(AtomicUsize::new(0));
        let (stop_flag, count) = (stop.clone(), connections.clone());
        let thread = thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                count.fetch_add(1, Ordering::SeqCst);
                let Ok(reader) = stream.try_clone() else {
                    continue;
                };
                serve_stream(reader, &stream, &mut handler).ok();
                stream.shutdown(std::net::Shutdown::Both).ok();
            }
        });
        Ok(Self {
            addr,
            stop,
            connections,
            thread: Some(thread),
        })
    }

    pub fn address(&self) -> SocketAddr {
        self.addr
    }

    /// Connections accepted so far.
    pub fn connections(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }

    /// Client configuration pointing at this server.
    pub fn client_config(&self) -> BridgeConfig {
        BridgeConfig {
            transport: Transport::Tcp {
                address: self.addr.to_string(),
            },
            ..BridgeConfig::default()
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept(); a connection still being served ends when its
        // client hangs up
        TcpStream::connect(self.addr).ok();
        if let Some(t) = self.thread.take() {
            if t.is_finished() {
                t.join().ok();
            }
        }
    }
}
