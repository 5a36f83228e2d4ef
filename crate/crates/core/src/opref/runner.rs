//! Line-delimited JSON protocol for out-of-process backends.
//!
//! Request: `{"graph": "<graph text>", "inputs": [{"dtype", "shape", "data"}]}`
//! with `data` the base64 of the row-major little-endian payload.
//! Response: `{"status": "ok" | "validity" | "fault", "outputs": [...], "message": "..."}`.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::exec::{Backend, ExecError};
use crate::graphir::Graph;
use crate::tensor::{DType, Tensor, TensorType};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTensor {
    pub dtype: DType,
    pub shape: Vec<i64>,
    pub data: String,
}

impl WireTensor {
    pub fn encode(t: &Tensor) -> WireTensor {
        WireTensor {
            dtype: t.ty.dtype,
            shape: t.ty.shape.clone(),
            data: t.to_base64(),
        }
    }

    pub fn decode(&self) -> Result<Tensor, crate::tensor::PayloadError> {
        Tensor::from_base64(TensorType::new(self.dtype, self.shape.clone()), &self.data)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub graph: String,
    pub inputs: Vec<WireTensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Validity,
    Fault,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub status: Status,
    #[serde(default)]
    pub outputs: Vec<WireTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Response {
    pub fn from_result(r: Result<Vec<Tensor>, ExecError>) -> Response {
        match r {
            Ok(outs) => Response {
                status: Status::Ok,
                outputs: outs.iter().map(WireTensor::encode).collect(),
                message: None,
            },
            Err(e) => Response {
                status: if e.is_validity() { Status::Validity } else { Status::Fault },
                outputs: Vec::new(),
                message: Some(e.to_string()),
            },
        }
    }

    pub fn into_result(self) -> Result<Vec<Tensor>, ExecError> {
        let msg = self.message.unwrap_or_default();
        match self.status {
            Status::Ok => self
                .outputs
                .iter()
                .map(|w| w.decode().map_err(|e| ExecError::Fault(format!("bad output payload: {e}"))))
                .collect(),
            Status::Validity => Err(ExecError::Validity {
                inst: 0,
                api: "remote".into(),
                msg,
            }),
            Status::Fault => match msg.strip_prefix("not implemented: ") {
                Some(rest) => Err(ExecError::NotImplemented(rest.to_string())),
                None => Err(ExecError::Fault(msg)),
            },
        }
    }
}

/// Answers requests from `input` until EOF. Malformed requests get a fault
/// response and the loop continues.
pub fn serve<R: BufRead, W: Write>(backend: &mut dyn Backend, input: R, mut output: W) -> io::Result<usize> {
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match handle(backend, &line) {
            Ok(r) => r,
            Err(msg) => Response {
                status: Status::Fault,
                outputs: Vec::new(),
                message: Some(msg),
            },
        };
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

fn handle(backend: &mut dyn Backend, line: &str) -> Result<Response, String> {
    let req: Request = serde_json::from_str(line).map_err(|e| format!("malformed request: {e}"))?;
    let graph = Graph::parse(&req.graph).map_err(|e| format!("graph: {e}"))?;
    let inputs = req
        .inputs
        .iter()
        .map(WireTensor::decode)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("input payload: {e}"))?;
    Ok(Response::from_result(backend.run(&graph, &inputs)))
}

/// A backend living in a child process that speaks the protocol.
pub struct ExternalBackend {
    command: Vec<String>,
    timeout: Duration,
    proc: Option<Running>,
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
}

impl ExternalBackend {
    pub fn new(command: Vec<String>, timeout: Duration) -> ExternalBackend {
        ExternalBackend {
            command,
            timeout,
            proc: None,
        }
    }

    /// Parses `cmd:<program> [args...]` (whitespace separated).
    pub fn from_spec(spec: &str, timeout: Duration) -> Option<ExternalBackend> {
        let rest = spec.strip_prefix("cmd:")?;
        let command: Vec<String> = rest.split_whitespace().map(String::from).collect();
        if command.is_empty() {
            return None;
        }
        Some(ExternalBackend::new(command, timeout))
    }

    fn spawn(&mut self) -> io::Result<&mut Running> {
        if self.proc.is_none() {
            let mut child = Command::new(&self.command[0])
                .args(&self.command[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            self.proc = Some(Running {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.proc.as_mut().unwrap())
    }

    fn kill(&mut self) {
        if let Some(mut p) = self.proc.take() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }

    fn exchange(&mut self, line: &str) -> Result<String, ExecError> {
        let timeout = self.timeout;
        let p = self
            .spawn()
            .map_err(|e| ExecError::BackendLost(format!("cannot start runner: {e}")))?;
        if writeln!(p.stdin, "{line}").and_then(|_| p.stdin.flush()).is_err() {
            let status = p.child.wait().ok();
            self.proc = None;
            return Err(ExecError::BackendLost(format!("runner exited ({status:?})")));
        }
        match p.lines.recv_timeout(timeout) {
            Ok(Ok(resp)) => Ok(resp),
            Ok(Err(e)) => {
                self.kill();
                Err(ExecError::Fault(format!("runner stdout: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(ExecError::Fault(format!("runner timed out after {timeout:?}")))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = p.child.wait().ok();
                self.proc = None;
                Err(ExecError::BackendLost(format!("runner exited ({status:?})")))
            }
        }
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        self.kill();
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> String {
        format!("cmd:{}", self.command.join(" "))
    }

    fn run(&mut self, graph: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError> {
        let req = Request {
            graph: graph.to_text(),
            inputs: inputs.iter().map(WireTensor::encode).collect(),
        };
        let line = serde_json::to_string(&req).expect("request serializes");
        let resp = self.exchange(&line)?;
        let resp: Response =
            serde_json::from_str(&resp).map_err(|e| ExecError::Fault(format!("malformed response: {e}")))?;
        resp.into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opref::exec::EagerBackend;

    #[test]
    fn serve_classifies_outcomes() {
        let x = Tensor::new(TensorType::f32(&[2]), vec![-1.0, 2.0]);
        let ok = Request {
            graph: "%0: f32[2] = input\n%1: f32[2] = relu(%0)\nreturn %1\n".into(),
            inputs: vec![WireTensor::encode(&x)],
        };
        let invalid = Request {
            graph: "%0: f32[2] = input\n%1: f32[2] = slice(%0) {start=1, end=5}\nreturn %1\n".into(),
            inputs: vec![WireTensor::encode(&x)],
        };
        let input = format!(
            "{}\nnot json\n{}\n",
            serde_json::to_string(&ok).unwrap(),
            serde_json::to_string(&invalid).unwrap()
        );
        let mut out = Vec::new();
        assert_eq!(serve(&mut EagerBackend::default(), input.as_bytes(), &mut out).unwrap(), 3);
        let resps: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(resps[0].status, Status::Ok);
        assert_eq!(resps[0].clone().into_result().unwrap()[0].data, vec![0.0, 2.0]);
        assert_eq!(resps[1].status, Status::Fault);
        assert_eq!(resps[2].status, Status::Validity);
    }

    #[test]
    fn wire_field_names() {
        let t = Tensor::new(TensorType::new(DType::I32, vec![2]), vec![1.0, -1.0]);
        let text = serde_json::to_string(&WireTensor::encode(&t)).unwrap();
        assert_eq!(text, r#"{"dtype":"i32","shape":[2],"data":"AQAAAP////8="}"#);
    }
}
