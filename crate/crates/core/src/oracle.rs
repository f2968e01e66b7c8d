//! Classification of execution results against a ported oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Anomaly, BugKind, Comparator, ExceptionSignature, Metric, OracleSpec};
use crate::generator::SynthesizedCase;

struct Patterns {
    hex: Regex,
    path: Regex,
    ident: Regex,
    number: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        hex: Regex::new(r"\b0[xX][0-9a-fA-F]+\b").unwrap(),
        path: Regex::new(r#"(?:[A-Za-z]:\\|\.{0,2}/)[^\s:'",()\[\]]+|\b[\w.\-]+(?:/[\w.\-]+)+\.[A-Za-z]\w*\b"#)
            .unwrap(),
        ident: Regex::new(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*").unwrap(),
        number: Regex::new(r"\b\d+(?:\.\d+)?(?:[eE][-+]?\d+)?\b").unwrap(),
    })
}

/// Keeps the type token verbatim and slots the volatile parts of the
/// message: hex addresses become `<ADDR>`, file paths `<PATH>`, known API
/// names `<API>` and number literals `<N>`. Whitespace is collapsed.
pub fn normalize_exception(exception_type: &str, message: &str, api_tokens: &BTreeSet<String>) -> ExceptionSignature {
    let p = patterns();
    let msg = p.hex.replace_all(message, "<ADDR>");
    let msg = p.path.replace_all(&msg, "<PATH>");
    let msg = p.ident.replace_all(&msg, |c: &Captures<'_>| {
        if api_tokens.contains(&c[0]) {
            "<API>".to_string()
        } else {
            c[0].to_string()
        }
    });
    let msg = p.number.replace_all(&msg, "<N>");
    ExceptionSignature {
        exception_type: exception_type.trim().to_string(),
        template: msg.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionStatus {
    Completed,
    Raised,
    Crashed,
    Timeout,
}

impl fmt::Display for ExecutionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionStatus::Completed => "completed",
            ExecutionStatus::Raised => "raised",
            ExecutionStatus::Crashed => "crashed",
            ExecutionStatus::Timeout => "timeout",
        })
    }
}

/// Readings for one recipe slot; `aggregate` is their median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub metric: Metric,
    pub samples: Vec<f64>,
    pub aggregate: f64,
}

impl MeasurementSample {
    /// `None` when there are no readings or any reading is negative or
    /// non-finite.
    pub fn from_samples(metric: Metric, samples: Vec<f64>) -> Option<Self> {
        if samples.is_empty() || samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return None;
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let aggregate = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Some(Self {
            metric,
            samples,
            aggregate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub case_id: String,
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception_signature: Option<ExceptionSignature>,
    #[serde(default)]
    pub output_flags: BTreeSet<Anomaly>,
    #[serde(default)]
    pub measurements: BTreeMap<String, MeasurementSample>,
    pub runner_id: String,
    pub wall_time_total: f64,
}

impl ExecutionResult {
    pub fn completed(case_id: impl Into<String>) -> Self {
        Self {
            case_id: case_id.into(),
            status: ExecutionStatus::Completed,
            exception_signature: None,
            output_flags: BTreeSet::new(),
            measurements: BTreeMap::new(),
            runner_id: String::new(),
            wall_time_total: 0.0,
        }
    }

    pub fn with_status(mut self, status: ExecutionStatus) -> Self {
        self.status = status;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum InconclusiveReason {
    Timeout,
    Crashed,
    RunnerFailure(String),
    UnexpectedException,
    MissingMeasurement(String),
    MetricMismatch,
}

impl fmt::Display for InconclusiveReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InconclusiveReason::Timeout => f.write_str("timeout"),
            InconclusiveReason::Crashed => f.write_str("crashed"),
            InconclusiveReason::RunnerFailure(d) => write!(f, "runner-failure ({d})"),
            InconclusiveReason::UnexpectedException => f.write_str("unexpected-exception"),
            InconclusiveReason::MissingMeasurement(s) => write!(f, "missing-measurement ({s})"),
            InconclusiveReason::MetricMismatch => f.write_str("metric-mismatch"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "kebab-case")]
pub enum VerdictKind {
    Bug(BugKind),
    NoBug,
    Inconclusive(InconclusiveReason),
}

impl VerdictKind {
    pub fn is_bug(&self) -> bool {
        matches!(self, VerdictKind::Bug(_))
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictKind::Bug(k) => write!(f, "bug({k})"),
            VerdictKind::NoBug => f.write_str("no-bug"),
            VerdictKind::Inconclusive(r) => write!(f, "inconclusive({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub oracle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_status: Option<ExecutionStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<ExceptionSignature>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Anomaly>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub case_id: String,
    pub target_api: String,
    pub source_case_id: String,
    #[serde(rename = "outcome")]
    pub kind: VerdictKind,
    pub evidence: Evidence,
}

/// On-disk form of a verdict (`"kind": "verdict"`).
pub type VerdictRecord = Verdict;

impl Verdict {
    /// Verdict for a case whose runner session failed before producing a
    /// result.
    pub fn runner_failure(case: &SynthesizedCase, detail: impl Into<String>) -> Self {
        Self {
            case_id: case.case_id.clone(),
            target_api: case.target_api.clone(),
            source_case_id: case.source_case_id.clone(),
            kind: VerdictKind::Inconclusive(InconclusiveReason::RunnerFailure(detail.into())),
            evidence: Evidence {
                oracle: case.oracle.fingerprint(),
                ..Evidence::default()
            },
        }
    }
}

/// Identical normalized exception, or a silent crash against the
/// hard-crash oracle.
pub fn check_status(expected: &ExceptionSignature, result: &ExecutionResult) -> bool {
    match result.status {
        ExecutionStatus::Raised => result.exception_signature.as_ref() == Some(expected),
        ExecutionStatus::Crashed => expected.is_hard_crash(),
        _ => false,
    }
}

pub fn check_value(pattern: Anomaly, result: &ExecutionResult) -> bool {
    result.status == ExecutionStatus::Completed && result.output_flags.contains(&pattern)
}

/// Ratio test between two aggregates.
///
/// `SubjectExceedsBaseline`: `subject > margin * baseline`.
/// `NoImprovement`: `|subject - baseline| <= (margin - 1) * baseline`.
pub fn compare_overhead(comparator: Comparator, margin: f64, baseline: f64, subject: f64) -> bool {
    match comparator {
        Comparator::SubjectExceedsBaseline => subject > margin * baseline,
        Comparator::NoImprovement => (subject - baseline).abs() <= (margin - 1.0) * baseline,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerformanceCheckError {
    #[error("oracle is not a performance oracle")]
    NotPerformance,
    #[error("no measurement for slot {0:?}")]
    MissingMeasurement(String),
    #[error("measured metric does not match the recipe metric")]
    MetricMismatch,
}

pub fn check_performance(oracle: &OracleSpec, result: &ExecutionResult) -> Result<bool, PerformanceCheckError> {
    let OracleSpec::Performance {
        baseline_recipe,
        subject_recipe,
        comparator,
        margin,
    } = oracle
    else {
        return Err(PerformanceCheckError::NotPerformance);
    };
    let get = |slot: &str| {
        result
            .measurements
            .get(slot)
            .ok_or_else(|| PerformanceCheckError::MissingMeasurement(slot.to_string()))
    };
    let baseline = get("baseline")?;
    let subject = get("subject")?;
    if baseline.metric != baseline_recipe.metric
        || subject.metric != subject_recipe.metric
        || baseline.metric != subject.metric
    {
        return Err(PerformanceCheckError::MetricMismatch);
    }
    Ok(compare_overhead(
        *comparator,
        *margin,
        baseline.aggregate,
        subject.aggregate,
    ))
}

/// Judges one execution result. Total: every input yields a verdict.
pub fn evaluate(case: &SynthesizedCase, result: &ExecutionResult) -> Verdict {
    let mut evidence = Evidence {
        oracle: case.oracle.fingerprint(),
        observed_status: Some(result.status),
        exception: result.exception_signature.clone(),
        flags: result.output_flags.iter().copied().collect(),
        ..Evidence::default()
    };
    let kind = if result.case_id != case.case_id {
        VerdictKind::Inconclusive(InconclusiveReason::RunnerFailure(format!(
            "result for {:?} delivered for case {:?}",
            result.case_id, case.case_id
        )))
    } else if result.status == ExecutionStatus::Timeout {
        VerdictKind::Inconclusive(InconclusiveReason::Timeout)
    } else {
        match &case.oracle {
            OracleSpec::Status { exception_signature } => {
                if check_status(exception_signature, result) {
                    VerdictKind::Bug(BugKind::Status)
                } else {
                    VerdictKind::NoBug
                }
            }
            OracleSpec::Value { anomaly_pattern, .. } => match result.status {
                ExecutionStatus::Completed if check_value(*anomaly_pattern, result) => VerdictKind::Bug(BugKind::Value),
                ExecutionStatus::Completed => VerdictKind::NoBug,
                ExecutionStatus::Raised => VerdictKind::Inconclusive(InconclusiveReason::UnexpectedException),
                _ => VerdictKind::Inconclusive(InconclusiveReason::Crashed),
            },
            OracleSpec::Performance { comparator, margin, .. } => match result.status {
                ExecutionStatus::Completed => match check_performance(&case.oracle, result) {
                    Ok(hit) => {
                        let baseline = result.measurements["baseline"].aggregate;
                        evidence.baseline = Some(baseline);
                        evidence.subject = Some(result.measurements["subject"].aggregate);
                        evidence.threshold = Some(match comparator {
                            Comparator::SubjectExceedsBaseline => margin * baseline,
                            Comparator::NoImprovement => (margin - 1.0) * baseline,
                        });
                        if hit {
                            VerdictKind::Bug(BugKind::Performance)
                        } else {
                            VerdictKind::NoBug
                        }
                    }
                    Err(PerformanceCheckError::MissingMeasurement(slot)) => {
                        VerdictKind::Inconclusive(InconclusiveReason::MissingMeasurement(slot))
                    }
                    Err(_) => VerdictKind::Inconclusive(InconclusiveReason::MetricMismatch),
                },
                ExecutionStatus::Raised => VerdictKind::Inconclusive(InconclusiveReason::UnexpectedException),
                _ => VerdictKind::Inconclusive(InconclusiveReason::Crashed),
            },
        }
    };
    Verdict {
        case_id: case.case_id.clone(),
        target_api: case.target_api.clone(),
        source_case_id: case.source_case_id.clone(),
        kind,
        evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apis() -> BTreeSet<String> {
        ["torch.nn.Conv2d", "Conv2d"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn numbers_are_slotted() {
        let sig = normalize_exception("RuntimeError", "expected 4 channels, got 7", &apis());
        assert_eq!(sig.exception_type, "RuntimeError");
        assert_eq!(sig.template, "expected <N> channels, got <N>");
    }

    #[test]
    fn paths_addresses_and_api_names_are_slotted() {
        let a = normalize_exception(
            "RuntimeError",
            "Conv2d failed in /usr/lib/python3/site.py at 0x7ffd12",
            &apis(),
        );
        let b = normalize_exception(
            "RuntimeError",
            "Conv2d   failed in /opt/env/lib/other.py at 0xdeadbeef",
            &apis(),
        );
        assert_eq!(a, b);
        assert_eq!(a.template, "<API> failed in <PATH> at <ADDR>");
    }

    #[test]
    fn identifiers_with_digits_keep_their_digits() {
        let sig = normalize_exception("ValueError", "conv2d got 3 dims", &BTreeSet::new());
        assert_eq!(sig.template, "conv2d got <N> dims");
    }

    #[test]
    fn exception_type_distinguishes_signatures() {
        let a = normalize_exception("RuntimeError", "bad input", &apis());
        let b = normalize_exception("ValueError", "bad input", &apis());
        assert_ne!(a, b);
    }

    #[test]
    fn median_aggregation() {
        let m = MeasurementSample::from_samples(Metric::WallTimeSeconds, vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.aggregate, 2.0);
        let m = MeasurementSample::from_samples(Metric::WallTimeSeconds, vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.aggregate, 2.5);
        assert!(MeasurementSample::from_samples(Metric::WallTimeSeconds, vec![]).is_none());
        assert!(MeasurementSample::from_samples(Metric::WallTimeSeconds, vec![f64::NAN]).is_none());
        assert!(MeasurementSample::from_samples(Metric::WallTimeSeconds, vec![-1.0]).is_none());
    }

    #[test]
    fn status_check() {
        let sig = normalize_exception("RuntimeError", "bad 1", &apis());
        let mut r = ExecutionResult::completed("c").with_status(ExecutionStatus::Raised);
        r.exception_signature = Some(sig.clone());
        assert!(check_status(&sig, &r));
        assert!(!check_status(&sig, &ExecutionResult::completed("c")));
        let crashed = ExecutionResult::completed("c").with_status(ExecutionStatus::Crashed);
        assert!(check_status(&ExceptionSignature::hard_crash(), &crashed));
        assert!(!check_status(&sig, &crashed));
    }

    #[test]
    fn value_check_is_pattern_specific() {
        let mut r = ExecutionResult::completed("c");
        assert!(!check_value(Anomaly::Nan, &r));
        r.output_flags.insert(Anomaly::Nan);
        assert!(check_value(Anomaly::Nan, &r));
        assert!(!check_value(Anomaly::Inf, &r));
    }

    #[test]
    fn overhead_comparators() {
        use Comparator::*;
        assert!(compare_overhead(SubjectExceedsBaseline, 1.05, 8.91, 11.79));
        assert!(!compare_overhead(SubjectExceedsBaseline, 1.05, 10.0, 10.4));
        assert!(compare_overhead(NoImprovement, 1.05, 40.43, 40.43));
        assert!(!compare_overhead(NoImprovement, 1.05, 40.43, 21.82));
        assert!(compare_overhead(SubjectExceedsBaseline, 1.05, 0.0, 0.1));
    }
}
