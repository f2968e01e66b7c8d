//! Python bindings. Structured results cross the boundary as JSON text.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bugport::analyzer::{cluster_functions, BetaPolicy, SimilarityThresholds};
use bugport::corpus::{Comparator, Metric};
use bugport::generator::{partition_attempts, synthesize_all};
use bugport::matcher::{filter_arguments, match_pairs, CandidatePair, NoiseFilter};
use bugport::oracle::{compare_overhead, MeasurementSample};
use bugport::pipeline::{render_text, Pipeline, PipelineConfig, DEFAULT_NOISE_PATTERNS};
use bugport::records::to_jsonl;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated corpus.
#[pyclass(name = "Corpus")]
struct PyCorpus {
    inner: bugport::Corpus,
}

impl PyCorpus {
    fn thresholds(alpha_io: f64, alpha_call: f64, beta: Option<f64>) -> PyResult<SimilarityThresholds> {
        let t = SimilarityThresholds {
            alpha_io,
            alpha_call,
            beta: beta.map(BetaPolicy::fixed).unwrap_or_default(),
        };
        t.validate().map_err(value_err)?;
        Ok(t)
    }

    fn pairs(&self, thresholds: &SimilarityThresholds) -> PyResult<Vec<CandidatePair>> {
        let groups = cluster_functions(self.inner.source_functions.values(), thresholds);
        let noise = NoiseFilter::new(DEFAULT_NOISE_PATTERNS).map_err(value_err)?;
        Ok(match_pairs(&self.inner, &groups, thresholds, &noise))
    }
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(paths: Vec<PathBuf>) -> PyResult<Self> {
        bugport::Corpus::load(&paths)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn apis(&self) -> Vec<String> {
        self.inner.signatures.keys().cloned().collect()
    }

    #[getter]
    fn bug_case_ids(&self) -> Vec<String> {
        self.inner.bug_cases.keys().cloned().collect()
    }

    /// Function groups as JSON lines.
    #[pyo3(signature = (alpha_io=0.8, alpha_call=0.8))]
    fn cluster_functions(&self, alpha_io: f64, alpha_call: f64) -> PyResult<String> {
        let t = Self::thresholds(alpha_io, alpha_call, None)?;
        Ok(to_jsonl(&cluster_functions(self.inner.source_functions.values(), &t)))
    }

    /// Candidate pairs as JSON lines. `beta` applies to every framework
    /// when given; per-framework defaults are used otherwise.
    #[pyo3(signature = (beta=None, alpha_io=0.8, alpha_call=0.8))]
    fn match_pairs(&self, beta: Option<f64>, alpha_io: f64, alpha_call: f64) -> PyResult<String> {
        let t = Self::thresholds(alpha_io, alpha_call, beta)?;
        Ok(to_jsonl(&self.pairs(&t)?))
    }

    /// `(cases, skips)` as JSON lines, from the pairs matched with default
    /// thresholds or from `pairs_jsonl` when given.
    #[pyo3(signature = (pairs_jsonl=None))]
    fn synthesize_all(&self, pairs_jsonl: Option<&str>) -> PyResult<(String, String)> {
        let pairs: Vec<CandidatePair> = match pairs_jsonl {
            Some(text) => text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .map_err(value_err)?,
            None => self.pairs(&SimilarityThresholds::default())?,
        };
        let (cases, skips) = partition_attempts(synthesize_all(&self.inner, &pairs));
        Ok((to_jsonl(&cases), to_jsonl(&skips)))
    }

    /// True unless each API requires a parameter the other lacks.
    fn filter_arguments(&self, source: &str, target: &str) -> PyResult<bool> {
        let sig = |api: &str| {
            self.inner
                .signature(api)
                .ok_or_else(|| PyValueError::new_err(format!("unknown API {api:?}")))
        };
        Ok(filter_arguments(sig(source)?, sig(target)?).is_accept())
    }

    fn __len__(&self) -> usize {
        self.inner.signatures.len()
    }
}

#[pyfunction]
fn jaccard(a: Vec<String>, b: Vec<String>) -> f64 {
    let a: BTreeSet<String> = a.into_iter().collect();
    let b: BTreeSet<String> = b.into_iter().collect();
    bugport::jaccard(&a, &b)
}

/// `(type, template)` with volatile message parts replaced by slots.
#[pyfunction]
#[pyo3(signature = (exception_type, message, api_tokens=Vec::new()))]
fn normalize_exception(exception_type: &str, message: &str, api_tokens: Vec<String>) -> (String, String) {
    let sig = bugport::oracle::normalize_exception(exception_type, message, &api_tokens.into_iter().collect());
    (sig.exception_type, sig.template)
}

/// Compares the medians of two sample lists under a comparator
/// (`subject_exceeds_baseline` or `no_improvement`).
#[pyfunction]
#[pyo3(signature = (comparator, baseline, subject, margin=bugport::corpus::DEFAULT_MARGIN))]
fn check_performance(comparator: &str, baseline: Vec<f64>, subject: Vec<f64>, margin: f64) -> PyResult<bool> {
    let comparator: Comparator =
        serde_json::from_value(serde_json::Value::String(comparator.into())).map_err(value_err)?;
    let median = |s: Vec<f64>| {
        MeasurementSample::from_samples(Metric::WallTimeSeconds, s)
            .map(|m| m.aggregate)
            .ok_or_else(|| PyValueError::new_err("samples must be non-empty, finite and non-negative"))
    };
    Ok(compare_overhead(
        comparator,
        margin,
        median(baseline)?,
        median(subject)?,
    ))
}

/// Percentage of generated cases that triggered a bug; None when no case
/// was generated.
#[pyfunction]
fn trigger_ratio(valid: usize, total: usize) -> Option<f64> {
    bugport::pipeline::trigger_ratio(valid, total)
}

#[pyfunction]
fn avg_time_to_bug_min(detection_wall_time_s: f64, bugs: usize) -> Option<f64> {
    bugport::pipeline::avg_time_to_bug_min(detection_wall_time_s, bugs)
}

/// Runs every stage with the given config file and returns the text report.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn run_pipeline(config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<String> {
    let mut c = PipelineConfig::default();
    c.apply_file(&config).map_err(value_err)?;
    if let Some(out) = out_dir {
        c.out_dir = out;
    }
    let built = Pipeline::new(c)
        .and_then(|p| p.run_all())
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(render_text(&built))
}

/// Report summary of a finished run as JSON.
#[pyfunction]
fn read_report(out_dir: PathBuf) -> PyResult<String> {
    let text = bugport::pipeline::read_report(&out_dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let summary = text.lines().next().unwrap_or("{}");
    let value: serde_json::Value = serde_json::from_str(summary).map_err(value_err)?;
    Ok(value.to_string())
}

#[pymodule]
fn bugport_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_exception, m)?)?;
    m.add_function(wrap_pyfunction!(check_performance, m)?)?;
    m.add_function(wrap_pyfunction!(trigger_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(avg_time_to_bug_min, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(read_report, m)?)?;
    Ok(())
}
