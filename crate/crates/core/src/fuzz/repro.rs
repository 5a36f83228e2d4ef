use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::campaign::payloads;
use super::{check_pair, Verdict, VerdictKind};
use crate::graphir::{Graph, ParseError};
use crate::opref::{execute_eager, Backend, ExecError, Library};
use crate::tensor::Tensor;

/// Metadata stored next to a saved graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproCase {
    pub test: usize,
    /// Payload seed for `graph.gir` (and generator seed of the test).
    pub seed: u64,
    pub backend: String,
    pub kind: VerdictKind,
    pub detail: String,
    pub key: String,
    pub eager_digest: String,
    pub optimized_digest: String,
}

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("{0} verdicts are not saved")]
    NotAReport(VerdictKind),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("case.json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("graph.gir: {0}")]
    Graph(#[from] ParseError),
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable digest of a run: output types and payload bytes, or the error.
pub fn digest(r: &Result<Vec<Tensor>, ExecError>) -> String {
    let mut h = 0xcbf2_9ce4_8422_2325;
    match r {
        Ok(outs) => {
            for t in outs {
                h = fnv1a(t.ty.to_string().as_bytes(), h);
                h = fnv1a(&t.to_bytes(), h);
            }
            format!("ok:{h:016x}")
        }
        Err(e) => format!("err:{:016x}", fnv1a(e.to_string().as_bytes(), h)),
    }
}

/// Writes `<dir>/<kind>/test-<n>/` with `graph.gir`, `case.json` and,
/// when given, `minimized.gir`. Returns the case directory.
pub fn save_reproducer(dir: &Path, case: &ReproCase, graph: &Graph, minimized: Option<&Graph>) -> Result<PathBuf, ReproError> {
    if !case.kind.is_report() {
        return Err(ReproError::NotAReport(case.kind));
    }
    let path = dir.join(case.kind.name()).join(format!("test-{}", case.test));
    fs::create_dir_all(&path)?;
    fs::write(path.join("graph.gir"), graph.to_text())?;
    if let Some(m) = minimized {
        fs::write(path.join("minimized.gir"), m.to_text())?;
    }
    fs::write(path.join("case.json"), serde_json::to_string_pretty(case)?)?;
    Ok(path)
}

/// Re-runs a saved case and returns the fresh verdict with its metadata.
pub fn replay(path: &Path, lib: &Library, backend: &mut dyn Backend) -> Result<(ReproCase, Verdict), ReproError> {
    let case: ReproCase = serde_json::from_str(&fs::read_to_string(path.join("case.json"))?)?;
    let graph = Graph::parse(&fs::read_to_string(path.join("graph.gir"))?)?;
    let inputs = payloads(&graph, case.seed);
    let eager = execute_eager(lib, &graph, &inputs);
    let opt = backend.run(&graph, &inputs);
    Ok((case, check_pair(&eager, &opt)))
}
