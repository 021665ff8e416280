//! Newline-delimited JSON protocol spoken with an external controller.
//!
//! Request, one line:
//! `{"config":{"<knob>":<value>,...},"queries":["<id>",...],"timeout_s":<number>}`
//!
//! Reply, one line:
//! `{"status":"ok"|"failed"|"timeout","latencies":{"<id>":<seconds>,...}}`
//!
//! `latencies` must cover every requested id when `status` is `ok` and is
//! ignored otherwise. A `timeout_s` of `0` disables the timeout (used for
//! the initial default-cost measurement).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{penalty_for, EvalOutcome, EvalRequest, Executor, SimModel};
use crate::config_space::ConfigSpace;
use crate::error::{Error, Result};
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRequest {
    pub config: Map<String, Value>,
    pub queries: Vec<String>,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerReply {
    pub status: WireStatus,
    #[serde(default)]
    pub latencies: BTreeMap<String, f64>,
}

/// One request in flight at a time over a TCP stream.
#[derive(Debug)]
pub struct ControllerClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ControllerClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(Error::Transport)?;
        let writer = stream.try_clone().map_err(Error::Transport)?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn send(&mut self, request: &ControllerRequest) -> Result<ControllerReply> {
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(Error::Transport)?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(Error::Transport)?;
        if n == 0 {
            return Err(Error::Protocol("controller closed the connection".into()));
        }
        serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::Protocol(format!("malformed reply: {e}")))
    }

    /// Measure `ids` under the default configuration, without a timeout.
    pub fn measure_defaults(&mut self, space: &ConfigSpace, ids: &[String]) -> Result<Vec<f64>> {
        let reply = self.send(&ControllerRequest {
            config: space.to_json_map(&space.default_assignment()),
            queries: ids.to_vec(),
            timeout_s: 0.0,
        })?;
        if reply.status != WireStatus::Ok {
            return Err(Error::Protocol(format!(
                "default configuration reported {:?}",
                reply.status
            )));
        }
        ids.iter()
            .map(|id| positive_latency(&reply, id))
            .collect()
    }
}

fn positive_latency(reply: &ControllerReply, id: &str) -> Result<f64> {
    match reply.latencies.get(id) {
        Some(&l) if l > 0.0 && l.is_finite() => Ok(l),
        Some(&l) => Err(Error::Protocol(format!("nonpositive latency {l} for `{id}`"))),
        None => Err(Error::Protocol(format!("reply lacks latency for `{id}`"))),
    }
}

/// [`Executor`] that forwards every evaluation to a controller.
#[derive(Debug)]
pub struct ExternalExecutor {
    client: ControllerClient,
    space: ConfigSpace,
    workload: Workload,
}

impl ExternalExecutor {
    pub fn new(client: ControllerClient, space: ConfigSpace, workload: Workload) -> Self {
        Self {
            client,
            space,
            workload,
        }
    }
}

impl Executor for ExternalExecutor {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalOutcome> {
        if req.queries.is_empty() {
            return Err(Error::EmptyRequest);
        }
        let penalized_total = penalty_for(&self.workload, req.queries);
        let ids: Vec<String> = req
            .queries
            .iter()
            .map(|&q| self.workload.query(q).id.clone())
            .collect();
        let reply = self.client.send(&ControllerRequest {
            config: self.space.to_json_map(req.config),
            queries: ids.clone(),
            timeout_s: penalized_total,
        })?;
        match reply.status {
            WireStatus::Failed => Ok(EvalOutcome::Failed { penalized_total }),
            WireStatus::Timeout => Ok(EvalOutcome::Timeout { penalized_total }),
            WireStatus::Ok => {
                let latencies = ids
                    .iter()
                    .map(|id| positive_latency(&reply, id))
                    .collect::<Result<Vec<f64>>>()?;
                // The controller may not enforce the timeout itself.
                if latencies.iter().sum::<f64>() > penalized_total {
                    Ok(EvalOutcome::Timeout { penalized_total })
                } else {
                    Ok(EvalOutcome::Ok { latencies })
                }
            }
        }
    }
}

fn answer(model: &SimModel, workload: &Workload, request: &ControllerRequest) -> Result<ControllerReply> {
    let values = model.space.from_json_map(&request.config)?;
    let queries = request
        .queries
        .iter()
        .map(|id| workload.index_of(id))
        .collect::<Result<Vec<usize>>>()?;
    if model.fails(&values) {
        return Ok(ControllerReply {
            status: WireStatus::Failed,
            latencies: BTreeMap::new(),
        });
    }
    let mut latencies = BTreeMap::new();
    let mut elapsed = 0.0;
    for (&q, id) in queries.iter().zip(&request.queries) {
        let l = model.latency(q, &values);
        elapsed += l;
        if request.timeout_s > 0.0 && elapsed > request.timeout_s {
            return Ok(ControllerReply {
                status: WireStatus::Timeout,
                latencies: BTreeMap::new(),
            });
        }
        latencies.insert(id.clone(), l);
    }
    Ok(ControllerReply {
        status: WireStatus::Ok,
        latencies,
    })
}

/// Serve a [`SimModel`] over the controller protocol.
///
/// Handles `max_connections` connections sequentially (forever when `None`).
/// Malformed requests close the offending connection.
pub fn serve_simulator(
    listener: TcpListener,
    model: &SimModel,
    workload: &Workload,
    max_connections: Option<usize>,
) -> Result<()> {
    let mut served = 0usize;
    for stream in listener.incoming() {
        let stream = stream?;
        let mut writer = stream.try_clone()?;
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let request: ControllerRequest = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("dropping connection after malformed request: {e}");
                    break;
                }
            };
            let reply = match answer(model, workload, &request) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("dropping connection after invalid request: {e}");
                    break;
                }
            };
            let mut out = serde_json::to_string(&reply)?;
            out.push('\n');
            writer.write_all(out.as_bytes())?;
            writer.flush()?;
        }
        served += 1;
        if max_connections.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}
