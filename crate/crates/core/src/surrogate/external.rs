//! Client for out-of-process surrogates speaking JSON lines over stdio.
//!
//! One frame per line. The client sends a handshake on connect, then one
//! `predict` frame per batch and waits for exactly one reply. Any reply that
//! fails validation is rejected with an error naming the failure kind; the
//! offending frame is logged.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Context, SurrogateBackend};
use crate::error::{Error, Result};
use crate::posterior::DiscretePosterior;
use crate::space::{DesignPoint, DesignSpace};

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames sent to the backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Handshake {
        version: u32,
    },
    Predict {
        context_x: Vec<Vec<f64>>,
        context_y: Vec<f64>,
        query_x: Vec<Vec<f64>>,
        num_bins: usize,
    },
}

/// Frames received from the backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    HandshakeOk {
        backend: String,
        max_context: usize,
    },
    Posterior {
        centers: Vec<Vec<f64>>,
        probs: Vec<Vec<f64>>,
    },
    Error {
        message: String,
    },
}

/// A framed duplex channel. Generic so the protocol can be exercised over
/// in-memory pipes as well as a child's stdio.
pub struct Connection<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> Connection<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }

    pub fn send(&mut self, frame: &Request) -> Result<()> {
        let line = serde_json::to_string(frame).map_err(|e| Error::Transport(e.to_string()))?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Transport(format!("write failed: {e}")))
    }

    /// Reads one frame. The raw line is returned alongside for diagnostics.
    pub fn recv(&mut self) -> Result<(Response, String)> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| Error::Transport(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Transport("backend closed its output".into()));
        }
        let line = line.trim_end().to_string();
        match serde_json::from_str::<Response>(&line) {
            Ok(r) => Ok((r, line)),
            Err(e) => {
                log::error!("malformed frame from backend: {line}");
                Err(Error::MalformedFrame {
                    reason: e.to_string(),
                    frame: line,
                })
            }
        }
    }

    pub fn handshake(&mut self) -> Result<(String, usize)> {
        self.send(&Request::Handshake {
            version: PROTOCOL_VERSION,
        })?;
        match self.recv()? {
            (Response::HandshakeOk { backend, max_context }, _) => Ok((backend, max_context)),
            (Response::Error { message }, _) => Err(Error::Backend(message)),
            (_, frame) => Err(Error::MalformedFrame {
                reason: "expected handshake_ok".into(),
                frame,
            }),
        }
    }

    /// Sends one predict frame and validates the reply.
    pub fn predict(
        &mut self,
        context_x: &[Vec<f64>],
        context_y: &[f64],
        query_x: &[Vec<f64>],
        num_bins: usize,
    ) -> Result<Vec<DiscretePosterior>> {
        self.send(&Request::Predict {
            context_x: context_x.to_vec(),
            context_y: context_y.to_vec(),
            query_x: query_x.to_vec(),
            num_bins,
        })?;
        let (centers, probs, frame) = match self.recv()? {
            (Response::Posterior { centers, probs }, frame) => (centers, probs, frame),
            (Response::Error { message }, _) => return Err(Error::Backend(message)),
            (_, frame) => {
                return Err(Error::MalformedFrame {
                    reason: "expected posterior".into(),
                    frame,
                })
            }
        };
        parse_posteriors(centers, probs, query_x.len()).inspect_err(|e| {
            log::error!("rejected backend frame ({e}): {frame}");
        })
    }
}

/// Validates a posterior frame's payload: one entry per query, strictly
/// ascending centers, probabilities summing to 1 within tolerance.
pub fn parse_posteriors(
    centers: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    queries: usize,
) -> Result<Vec<DiscretePosterior>> {
    if centers.len() != queries || probs.len() != queries {
        return Err(Error::MalformedFrame {
            reason: format!(
                "expected {queries} posteriors, got {} center rows and {} probability rows",
                centers.len(),
                probs.len()
            ),
            frame: String::new(),
        });
    }
    centers
        .into_iter()
        .zip(probs)
        .map(|(c, p)| match DiscretePosterior::new(c, p) {
            Err(Error::InvalidPosterior(reason)) => Err(Error::MalformedFrame {
                reason,
                frame: String::new(),
            }),
            other => other,
        })
        .collect()
}

type ChildConnection = Connection<BufReader<ChildStdout>, ChildStdin>;

/// A handshaken connection to a backend process, killed on drop.
pub struct ExternalClient {
    child: Child,
    conn: ChildConnection,
    backend: String,
    max_context: usize,
}

impl ExternalClient {
    /// Spawns `command` (split with shell quoting rules) and performs the
    /// handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::Config(format!("cannot parse backend command `{command}`")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Connection::new(BufReader::new(stdout), stdin);
        let (backend, max_context) = match conn.handshake() {
            Ok(v) => v,
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(e);
            }
        };
        log::info!("external backend `{backend}` ready (max context {max_context})");
        Ok(Self {
            child,
            conn,
            backend,
            max_context,
        })
    }

    pub fn backend_name(&self) -> &str {
        &self.backend
    }

    pub fn max_context(&self) -> usize {
        self.max_context
    }

    pub fn predict(
        &mut self,
        context_x: &[Vec<f64>],
        context_y: &[f64],
        query_x: &[Vec<f64>],
        num_bins: usize,
    ) -> Result<Vec<DiscretePosterior>> {
        if context_y.len() > self.max_context {
            return Err(Error::ContextTooLarge {
                size: context_y.len(),
                limit: self.max_context,
            });
        }
        self.conn.predict(context_x, context_y, query_x, num_bins)
    }
}

impl Drop for ExternalClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Surrogate backed by an [`ExternalClient`]. Several instances may share one
/// client; requests are serialized through its lock.
pub struct ExternalBackend {
    client: Arc<Mutex<ExternalClient>>,
    bins: usize,
    context: Option<(DesignSpace, Vec<Vec<f64>>, Vec<f64>)>,
}

impl ExternalBackend {
    pub fn new(client: Arc<Mutex<ExternalClient>>, bins: usize) -> Self {
        Self {
            client,
            bins,
            context: None,
        }
    }
}

impl SurrogateBackend for ExternalBackend {
    fn name(&self) -> String {
        let client = self.client.lock().unwrap_or_else(|e| e.into_inner());
        format!("external:{}", client.backend_name())
    }

    fn set_context(&mut self, ctx: &Context) -> Result<()> {
        let limit = self.client.lock().unwrap_or_else(|e| e.into_inner()).max_context();
        if ctx.len() > limit {
            return Err(Error::ContextTooLarge { size: ctx.len(), limit });
        }
        self.context = Some((ctx.space().clone(), ctx.inputs().to_vec(), ctx.outputs().to_vec()));
        Ok(())
    }

    fn predict_batch(&self, queries: &[DesignPoint]) -> Result<Vec<DiscretePosterior>> {
        let (space, x, y) = self
            .context
            .as_ref()
            .ok_or_else(|| Error::Contract("predict before set_context".into()))?;
        let q: Vec<Vec<f64>> = queries.iter().map(|p| space.normalize(p)).collect();
        let mut client = self.client.lock().unwrap_or_else(|e| e.into_inner());
        client.predict(x, y, &q, self.bins)
    }
}

/// Settings for [`serve_mock`].
#[derive(Clone, Debug)]
pub struct MockConfig {
    pub max_context: usize,
    /// Multiplies every probability before sending; 1.0 sends the fixture.
    pub prob_scale: f64,
    /// Reverse the centers so the client sees a non-ascending frame.
    pub descending: bool,
    /// Reply with an error frame to every predict after this many successes.
    pub fail_after: Option<usize>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            max_context: 1000,
            prob_scale: 1.0,
            descending: false,
            fail_after: None,
        }
    }
}

/// The documented mock posterior: three bins centred on the context mean at
/// offsets −1, 0, +1 (in units of the context's output spread, or 1 when the
/// spread is zero) with masses 0.25, 0.5, 0.25. The requested bin count is
/// ignored.
pub fn mock_posterior(context_y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = context_y.len().max(1) as f64;
    let mean = context_y.iter().sum::<f64>() / n;
    let var = context_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let s = if var > 0.0 { var.sqrt() } else { 1.0 };
    (vec![mean - s, mean, mean + s], vec![0.25, 0.5, 0.25])
}

/// Runs the mock protocol loop until the input closes. Logs go nowhere near
/// `output`.
pub fn serve_mock<R: BufRead, W: Write>(input: R, mut output: W, cfg: &MockConfig) -> std::io::Result<()> {
    let mut served = 0usize;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Handshake { .. }) => Response::HandshakeOk {
                backend: "mock".into(),
                max_context: cfg.max_context,
            },
            Ok(Request::Predict { context_y, query_x, .. }) => {
                if context_y.len() > cfg.max_context {
                    Response::Error {
                        message: format!("context {} exceeds {}", context_y.len(), cfg.max_context),
                    }
                } else if cfg.fail_after.is_some_and(|n| served >= n) {
                    Response::Error {
                        message: "mock failure".into(),
                    }
                } else {
                    served += 1;
                    let (mut c, p) = mock_posterior(&context_y);
                    if cfg.descending {
                        c.reverse();
                    }
                    let p: Vec<f64> = p.iter().map(|v| v * cfg.prob_scale).collect();
                    Response::Posterior {
                        centers: vec![c; query_x.len()],
                        probs: vec![p; query_x.len()],
                    }
                }
            }
            Err(e) => Response::Error {
                message: format!("bad request: {e}"),
            },
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
