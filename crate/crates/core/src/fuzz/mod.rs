//! Differential fuzzing: oracle verdicts, campaigns and reproducers.

mod campaign;
mod repro;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::opref::ExecError;
use crate::tensor::Tensor;

pub use campaign::{
    dedup_key, minimize, payloads, run_campaign, test_seed, CampaignConfig, CampaignReport, Finding, Timing,
};
pub use repro::{digest, replay, save_reproducer, ReproCase, ReproError};

/// Flag an element only when both bounds are exceeded.
pub const ABS_TOL: f64 = 1e-3;
pub const REL_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Pass,
    InvalidDiscarded,
    Inconsistency,
    RuntimeError,
}

impl VerdictKind {
    pub fn is_report(self) -> bool {
        matches!(self, VerdictKind::Inconsistency | VerdictKind::RuntimeError)
    }

    pub fn name(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::InvalidDiscarded => "invalid-discarded",
            VerdictKind::Inconsistency => "inconsistency",
            VerdictKind::RuntimeError => "runtime-error",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Largest deviation of one output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDiff {
    pub index: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Elements exceeding both tolerances.
    pub flagged: usize,
    /// Set when the two types differ (no elementwise comparison).
    pub type_mismatch: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub detail: String,
    pub diffs: Vec<OutputDiff>,
}

impl Verdict {
    fn new(kind: VerdictKind, detail: impl Into<String>) -> Verdict {
        Verdict {
            kind,
            detail: detail.into(),
            diffs: Vec::new(),
        }
    }
}

/// Absolute and relative error of one element pair. NaN equals NaN and
/// infinities equal themselves; any other pairing with a non-finite value
/// is an infinite error.
pub fn element_error(eager: f64, other: f64) -> (f64, f64) {
    if eager.is_nan() || other.is_nan() {
        return if eager.is_nan() && other.is_nan() {
            (0.0, 0.0)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
    }
    if eager == other {
        return (0.0, 0.0);
    }
    let abs = (eager - other).abs();
    if !abs.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let rel = if eager == 0.0 { f64::INFINITY } else { abs / eager.abs() };
    (abs, rel)
}

pub fn exceeds(abs: f64, rel: f64) -> bool {
    abs > ABS_TOL && rel > REL_TOL
}

fn compare(index: usize, eager: &Tensor, other: &Tensor) -> OutputDiff {
    if eager.ty != other.ty || eager.data.len() != other.data.len() {
        return OutputDiff {
            index,
            max_abs: f64::INFINITY,
            max_rel: f64::INFINITY,
            flagged: eager.data.len().max(other.data.len()),
            type_mismatch: Some((eager.ty.to_string(), other.ty.to_string())),
        };
    }
    let mut d = OutputDiff {
        index,
        max_abs: 0.0,
        max_rel: 0.0,
        flagged: 0,
        type_mismatch: None,
    };
    for (&a, &b) in eager.data.iter().zip(&other.data) {
        let (abs, rel) = element_error(a, b);
        d.max_abs = d.max_abs.max(abs);
        d.max_rel = d.max_rel.max(rel);
        if exceeds(abs, rel) {
            d.flagged += 1;
        }
    }
    d
}

/// Classifies one eager/optimized pair of runs.
pub fn check_pair(eager: &Result<Vec<Tensor>, ExecError>, optimized: &Result<Vec<Tensor>, ExecError>) -> Verdict {
    let eager = match eager {
        Ok(v) => v,
        Err(e) => return Verdict::new(VerdictKind::InvalidDiscarded, format!("eager: {e}")),
    };
    let optimized = match optimized {
        Ok(v) => v,
        Err(e @ ExecError::NotImplemented(_)) => {
            return Verdict::new(VerdictKind::InvalidDiscarded, format!("optimized: {e}"))
        }
        Err(e) => return Verdict::new(VerdictKind::RuntimeError, format!("optimized: {e}")),
    };
    if eager.len() != optimized.len() {
        return Verdict::new(
            VerdictKind::Inconsistency,
            format!("{} eager outputs, {} optimized", eager.len(), optimized.len()),
        );
    }
    let diffs: Vec<OutputDiff> = eager.iter().zip(optimized).enumerate().map(|(k, (a, b))| compare(k, a, b)).collect();
    let bad: Vec<usize> = diffs.iter().filter(|d| d.flagged > 0).map(|d| d.index).collect();
    let (kind, detail) = if bad.is_empty() {
        (VerdictKind::Pass, String::new())
    } else {
        (VerdictKind::Inconsistency, format!("outputs {bad:?} differ"))
    };
    Verdict { kind, detail, diffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorType;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(TensorType::f32(&[v.len() as i64]), v.to_vec())
    }

    fn kind(a: Vec<Tensor>, b: Vec<Tensor>) -> VerdictKind {
        check_pair(&Ok(a), &Ok(b)).kind
    }

    #[test]
    fn tolerance_rule() {
        assert_eq!(kind(vec![t(&[1.0, 2.0])], vec![t(&[1.0, 2.0])]), VerdictKind::Pass);
        assert_eq!(kind(vec![t(&[1.0, 1.0])], vec![t(&[1.0, 1.5])]), VerdictKind::Inconsistency);
        assert_eq!(kind(vec![t(&[1.0])], vec![t(&[1.0005])]), VerdictKind::Pass);
        // large relative error, tiny absolute error
        assert_eq!(kind(vec![t(&[1e-5])], vec![t(&[5e-4])]), VerdictKind::Pass);
        // large absolute error, tiny relative error
        assert_eq!(kind(vec![t(&[1e6])], vec![t(&[1e6 + 10.0])]), VerdictKind::Pass);
        assert_eq!(kind(vec![t(&[0.0])], vec![t(&[0.01])]), VerdictKind::Inconsistency);
    }

    #[test]
    fn non_finite_values() {
        let nan = f64::NAN;
        let inf = f64::INFINITY;
        assert_eq!(kind(vec![t(&[nan, inf])], vec![t(&[nan, inf])]), VerdictKind::Pass);
        assert_eq!(kind(vec![t(&[nan])], vec![t(&[1.0])]), VerdictKind::Inconsistency);
        assert_eq!(kind(vec![t(&[1.0])], vec![t(&[nan])]), VerdictKind::Inconsistency);
        assert_eq!(kind(vec![t(&[inf])], vec![t(&[-inf])]), VerdictKind::Inconsistency);
        assert_eq!(kind(vec![t(&[inf])], vec![t(&[1e30])]), VerdictKind::Inconsistency);
    }

    #[test]
    fn shapes_and_counts() {
        assert_eq!(kind(vec![t(&[1.0, 2.0])], vec![t(&[1.0])]), VerdictKind::Inconsistency);
        assert_eq!(kind(vec![t(&[1.0])], vec![]), VerdictKind::Inconsistency);
        let v = check_pair(&Ok(vec![t(&[1.0, 2.0])]), &Ok(vec![t(&[1.0])]));
        assert!(v.diffs[0].type_mismatch.is_some());
    }

    #[test]
    fn failures() {
        let ok = Ok(vec![t(&[1.0])]);
        let validity = Err(ExecError::Validity {
            inst: 0,
            api: "x".into(),
            msg: "bad".into(),
        });
        let fault = Err(ExecError::Fault("abort".into()));
        let unimpl = Err(ExecError::NotImplemented("op".into()));
        assert_eq!(check_pair(&validity, &ok).kind, VerdictKind::InvalidDiscarded);
        assert_eq!(check_pair(&validity, &fault).kind, VerdictKind::InvalidDiscarded);
        assert_eq!(check_pair(&ok, &fault).kind, VerdictKind::RuntimeError);
        assert_eq!(check_pair(&ok, &validity).kind, VerdictKind::RuntimeError);
        assert_eq!(check_pair(&ok, &unimpl).kind, VerdictKind::InvalidDiscarded);
        assert!(VerdictKind::RuntimeError.is_report() && !VerdictKind::InvalidDiscarded.is_report());
    }
}
