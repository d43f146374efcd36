//! Client for out-of-process oracles.
//!
//! Newline-delimited JSON over a child process's stdio (`proc:<command line>`)
//! or a TCP socket (`tcp:<host>:<port>`):
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"ok":true,"name":str,"input_shape":[...],"output_shape":[...]}
//! -> {"op":"eval","id":u64,"data":"<base64 of little-endian f32, row-major>"}
//! <- {"ok":true,"id":u64,"data":"<base64 of little-endian f32>"}
//! -> {"op":"shutdown"}
//! <- {"ok":true}
//! errors: {"ok":false,"id":u64,"error":str}
//! ```
//!
//! Requests on one connection are serialized.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{OracleBackend, OracleHandle, OracleInfo, OracleKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Base64 of the little-endian `f32` rounding of `values`.
pub fn encode_f32_payload(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32_payload(data: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| Error::OracleUnavailable(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::OracleUnavailable(format!(
            "payload of {} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    /// Per-request reply timeout, including the handshake.
    pub timeout: Duration,
    /// When set, the advertised input shape must match before any eval is sent.
    pub expected_input_shape: Option<Vec<usize>>,
    /// Evaluate one seeded input twice and record whether replies agree.
    pub probe_determinism: bool,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            expected_input_shape: None,
            probe_determinism: true,
        }
    }
}

enum Transport {
    Process(Child),
    Tcp(TcpStream),
}

struct LineChannel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    transport: Transport,
}

impl LineChannel {
    fn spawn_reader<R: Read + Send + 'static>(reader: R) -> Receiver<std::io::Result<String>> {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        rx
    }

    fn open(spec: &str, timeout: Duration) -> Result<(Self, OracleKind)> {
        if let Some(cmd) = spec.strip_prefix("proc:") {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(cmd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::OracleUnavailable(format!("spawning {cmd:?}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok((
                Self {
                    writer: Box::new(stdin),
                    lines: Self::spawn_reader(stdout),
                    timeout,
                    transport: Transport::Process(child),
                },
                OracleKind::ExternalProcess,
            ))
        } else if let Some(addr) = spec.strip_prefix("tcp:") {
            let stream = TcpStream::connect(addr)
                .map_err(|e| Error::OracleUnavailable(format!("connecting to {addr}: {e}")))?;
            stream.set_nodelay(true).ok();
            let reader = stream.try_clone()?;
            let writer = stream.try_clone()?;
            Ok((
                Self {
                    writer: Box::new(writer),
                    lines: Self::spawn_reader(reader),
                    timeout,
                    transport: Transport::Tcp(stream),
                },
                OracleKind::ExternalTcp,
            ))
        } else {
            Err(Error::InvalidInput(format!(
                "external oracle spec must start with proc: or tcp:, got {spec:?}"
            )))
        }
    }

    fn request(&mut self, msg: &Value) -> Result<Value> {
        let mut line = serde_json::to_string(msg).expect("request serializes");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::OracleUnavailable(format!("write failed: {e}")))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::OracleUnavailable(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::OracleUnavailable(format!(
                    "no reply within {:?}",
                    self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::OracleUnavailable("connection closed".into()))
            }
        };
        serde_json::from_str(&reply)
            .map_err(|e| Error::OracleUnavailable(format!("malformed reply {reply:?}: {e}")))
    }
}

impl Drop for LineChannel {
    fn drop(&mut self) {
        let _ = self.writer.write_all(b"{\"op\":\"shutdown\"}\n");
        let _ = self.writer.flush();
        match &mut self.transport {
            Transport::Process(child) => {
                // Give the server a moment to exit on its own before killing it.
                for _ in 0..50 {
                    if let Ok(Some(_)) = child.try_wait() {
                        return;
                    }
                    thread::sleep(Duration::from_millis(10));
                }
                let _ = child.kill();
                let _ = child.wait();
            }
            Transport::Tcp(stream) => {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}

#[derive(Deserialize)]
struct Hello {
    ok: bool,
    #[serde(default)]
    name: String,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

struct ExternalOracle {
    kind: OracleKind,
    channel: Mutex<LineChannel>,
    next_id: AtomicU64,
}

fn reply_error(reply: &Value) -> String {
    reply
        .get("error")
        .and_then(Value::as_str)
        .unwrap_or("unspecified error")
        .to_string()
}

impl OracleBackend for ExternalOracle {
    fn kind(&self) -> OracleKind {
        self.kind
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let msg = json!({"op": "eval", "id": id, "data": encode_f32_payload(x)});
        let reply = self
            .channel
            .lock()
            .expect("oracle channel poisoned")
            .request(&msg)?;
        let ok = reply
            .get("ok")
            .and_then(Value::as_bool)
            .ok_or_else(|| Error::OracleUnavailable(format!("reply without ok flag: {reply}")))?;
        if !ok {
            return Err(Error::OracleFault(format!(
                "eval {id} rejected: {}",
                reply_error(&reply)
            )));
        }
        if reply.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(Error::OracleUnavailable(format!(
                "reply id {:?} does not echo request id {id}",
                reply.get("id")
            )));
        }
        let data = reply
            .get("data")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::OracleUnavailable("eval reply without data".into()))?;
        decode_f32_payload(data)
    }
}

/// Connects with default options (30 s timeout, determinism probe on).
pub fn connect_external(spec: &str) -> Result<OracleHandle> {
    connect_external_with(spec, &ConnectOptions::default())
}

/// Opens the connection, performs the hello handshake and, optionally, the
/// determinism probe. The probe's two evaluations are counted like any other.
pub fn connect_external_with(spec: &str, opts: &ConnectOptions) -> Result<OracleHandle> {
    let (mut channel, kind) = LineChannel::open(spec, opts.timeout)?;
    let reply = channel.request(&json!({"op": "hello"}))?;
    let hello: Hello = serde_json::from_value(reply.clone())
        .map_err(|e| Error::OracleUnavailable(format!("bad hello reply {reply}: {e}")))?;
    if !hello.ok {
        return Err(Error::OracleUnavailable(format!(
            "hello refused: {}",
            reply_error(&reply)
        )));
    }
    let info = OracleInfo::new(
        if hello.name.is_empty() {
            spec.to_string()
        } else {
            hello.name
        },
        hello.input_shape,
        hello.output_shape,
    )
    .map_err(|e| Error::OracleUnavailable(format!("hello advertised {e}")))?;
    if let Some(expected) = &opts.expected_input_shape {
        if *expected != info.input_shape {
            return Err(Error::InvalidShape(format!(
                "oracle input shape {:?} does not match configured {:?}",
                info.input_shape, expected
            )));
        }
    }
    let mut handle = OracleHandle::new(
        info,
        Box::new(ExternalOracle {
            kind,
            channel: Mutex::new(channel),
            next_id: AtomicU64::new(1),
        }),
    );
    if opts.probe_determinism {
        let deterministic = probe_determinism(&handle)?;
        handle.set_deterministic(deterministic);
    }
    Ok(handle)
}

/// Evaluates one seeded input twice; `true` when both replies agree bit-for-bit.
pub fn probe_determinism(oracle: &OracleHandle) -> Result<bool> {
    let shape = oracle.info().input_shape.clone();
    let n = oracle.info().input_len();
    let x = Tensor::new(shape, Rng::new(0x5eed).uniform_vec(n, 0.0, 1.0))?;
    let a = oracle.eval(&x)?;
    let b = oracle.eval(&x)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .all(|(p, q)| p.to_bits() == q.to_bits()))
}
