//! Domain model, corpus ingestion and cross-reference validation.

mod model;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::*;

use crate::records::{self, Record};
use crate::sampler::IssueRecord;

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 0.0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    if union == 0 {
        0.0
    } else {
        shared as f64 / union as f64
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dangling reference: {0}")]
    Reference(String),
    #[error("duplicate {kind} {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    MissingRequired { param: String },
    UnknownParameter { param: String },
    RankMismatch { param: String, expected: u32, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingRequired { param } => write!(f, "missing-required {param}"),
            Violation::UnknownParameter { param } => write!(f, "unknown-parameter {param}"),
            Violation::RankMismatch { param, expected, found } => {
                write!(f, "rank-mismatch {param}: expected rank {expected}, found {found}")
            }
        }
    }
}

/// Checks a call's bindings against a signature. Violations are sorted.
pub fn validate_call(call: &StructuredCall, sig: &ApiSignature) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for p in &sig.required_params {
        if !call.bound_args.contains_key(&p.name) {
            violations.push(Violation::MissingRequired { param: p.name.clone() });
        }
    }
    for (name, value) in &call.bound_args {
        let Some(param) = sig.param(name) else {
            violations.push(Violation::UnknownParameter { param: name.clone() });
            continue;
        };
        if let (Some(Rank::Fixed(expected)), Value::Shape(shape)) = (param.rank_annotation, value) {
            if shape.rank() != expected as usize {
                violations.push(Violation::RankMismatch {
                    param: name.clone(),
                    expected,
                    found: shape.rank(),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        violations.sort();
        Err(violations)
    }
}

/// A fully cross-validated corpus. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub signatures: BTreeMap<String, ApiSignature>,
    pub source_functions: BTreeMap<String, SourceFunction>,
    pub traces: BTreeMap<String, CallStackTrace>,
    pub bug_cases: BTreeMap<String, BugCase>,
    pub signature_pairs: Vec<SignaturePair>,
    pub issues: Vec<IssueRecord>,
}

impl Corpus {
    /// Reads and validates every corpus file, in order.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self, CorpusError> {
        let mut builder = CorpusBuilder::default();
        for path in paths {
            let path = path.as_ref();
            for (line, record) in records::read_records(path)? {
                builder.add(record).map_err(|e| match e {
                    CorpusError::Invalid(message) => CorpusError::Parse {
                        path: path.to_path_buf(),
                        line,
                        message,
                    },
                    other => other,
                })?;
            }
        }
        builder.finish()
    }

    pub fn from_records<I: IntoIterator<Item = Record>>(records: I) -> Result<Self, CorpusError> {
        let mut builder = CorpusBuilder::default();
        for record in records {
            builder.add(record)?;
        }
        builder.finish()
    }

    /// Canonical record order: signatures, functions, traces, bug cases,
    /// signature pairs, issues; each keyed collection sorted by id.
    pub fn to_records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        out.extend(self.signatures.values().cloned().map(Record::Signature));
        out.extend(self.source_functions.values().cloned().map(Record::SourceFunction));
        out.extend(self.traces.values().cloned().map(Record::Trace));
        out.extend(self.bug_cases.values().cloned().map(Record::BugCase));
        out.extend(self.signature_pairs.iter().cloned().map(Record::SignaturePair));
        out.extend(self.issues.iter().cloned().map(Record::Issue));
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        records::write_records(path, &self.to_records())
    }

    pub fn signature(&self, api: &str) -> Option<&ApiSignature> {
        self.signatures.get(api)
    }

    /// Full names plus terminal segments of every known API.
    pub fn api_name_tokens(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for sig in self.signatures.values() {
            out.insert(sig.name.clone());
            out.insert(sig.terminal_name().to_string());
        }
        out
    }

    /// Adds extra bug cases (e.g. sampler output) with the same checks as
    /// ingestion.
    pub fn with_bug_cases<I: IntoIterator<Item = BugCase>>(mut self, cases: I) -> Result<Self, CorpusError> {
        for case in cases {
            if self.bug_cases.contains_key(&case.case_id) {
                return Err(CorpusError::Duplicate {
                    kind: "bug_case",
                    id: case.case_id,
                });
            }
            check_bug_case(&self.signatures, &case)?;
            self.bug_cases.insert(case.case_id.clone(), case);
        }
        Ok(self)
    }
}

#[derive(Default)]
struct CorpusBuilder {
    corpus: Corpus,
    issue_ids: BTreeSet<String>,
}

impl CorpusBuilder {
    fn add(&mut self, record: Record) -> Result<(), CorpusError> {
        let c = &mut self.corpus;
        match record {
            Record::Signature(sig) => {
                sig.check_invariants().map_err(CorpusError::Invalid)?;
                insert_unique(&mut c.signatures, "signature", sig.name.clone(), sig)
            }
            Record::SourceFunction(f) => {
                let f = f.normalized();
                insert_unique(&mut c.source_functions, "source_function", f.name.clone(), f)
            }
            Record::Trace(t) => insert_unique(&mut c.traces, "trace", t.api_name.clone(), t),
            Record::BugCase(b) => insert_unique(&mut c.bug_cases, "bug_case", b.case_id.clone(), b),
            Record::SignaturePair(p) => {
                if !(0.0..=1.0).contains(&p.score) {
                    return Err(CorpusError::Invalid(format!(
                        "signature pair {} -> {} has score {} outside [0, 1]",
                        p.source_api, p.target_api, p.score
                    )));
                }
                c.signature_pairs.push(p);
                Ok(())
            }
            Record::Issue(issue) => {
                if !self.issue_ids.insert(issue.issue_id.clone()) {
                    return Err(CorpusError::Duplicate {
                        kind: "issue",
                        id: issue.issue_id,
                    });
                }
                c.issues.push(issue);
                Ok(())
            }
            other => Err(CorpusError::Invalid(format!(
                "record kind {:?} does not belong in a corpus file",
                other.kind()
            ))),
        }
    }

    fn finish(self) -> Result<Corpus, CorpusError> {
        let mut corpus = self.corpus;
        for trace in corpus.traces.values() {
            if !corpus.signatures.contains_key(&trace.api_name) {
                return Err(CorpusError::Reference(format!(
                    "trace for unknown API {:?}",
                    trace.api_name
                )));
            }
        }
        for case in corpus.bug_cases.values() {
            check_bug_case(&corpus.signatures, case)?;
        }
        for pair in &corpus.signature_pairs {
            for api in [&pair.source_api, &pair.target_api] {
                if !corpus.signatures.contains_key(api) {
                    return Err(CorpusError::Reference(format!(
                        "signature pair references unknown API {api:?}"
                    )));
                }
            }
        }
        corpus.issues.sort_by(|a, b| a.issue_id.cmp(&b.issue_id));
        Ok(corpus)
    }
}

fn insert_unique<T>(
    map: &mut BTreeMap<String, T>,
    kind: &'static str,
    id: String,
    value: T,
) -> Result<(), CorpusError> {
    if map.contains_key(&id) {
        return Err(CorpusError::Duplicate { kind, id });
    }
    map.insert(id, value);
    Ok(())
}

fn check_bug_case(signatures: &BTreeMap<String, ApiSignature>, case: &BugCase) -> Result<(), CorpusError> {
    let id = &case.case_id;
    let sig = signatures
        .get(&case.source_api)
        .ok_or_else(|| CorpusError::Reference(format!("bug case {id:?} names unknown API {:?}", case.source_api)))?;
    if case.repro_call.api_name != case.source_api {
        return Err(CorpusError::Invalid(format!(
            "bug case {id:?}: repro call targets {:?}, not the source API {:?}",
            case.repro_call.api_name, case.source_api
        )));
    }
    if let Err(violations) = validate_call(&case.repro_call, sig) {
        let list: Vec<_> = violations.iter().map(ToString::to_string).collect();
        return Err(CorpusError::Invalid(format!(
            "bug case {id:?}: repro call does not fit {}: {}",
            sig.name,
            list.join(", ")
        )));
    }
    if case.bug_kind != case.oracle.kind() {
        return Err(CorpusError::Invalid(format!(
            "bug case {id:?}: bug kind {} but {} oracle",
            case.bug_kind,
            case.oracle.kind()
        )));
    }
    let mut recipe_calls: Vec<&StructuredCall> = case.repro_call.nested_calls();
    if let OracleSpec::Performance {
        baseline_recipe,
        subject_recipe,
        margin,
        ..
    } = &case.oracle
    {
        if !(margin.is_finite() && *margin >= 1.0) {
            return Err(CorpusError::Invalid(format!(
                "bug case {id:?}: margin {margin} must be >= 1.0"
            )));
        }
        for recipe in [baseline_recipe, subject_recipe] {
            if recipe.repetitions < 1 {
                return Err(CorpusError::Invalid(format!(
                    "bug case {id:?}: recipe repetitions must be >= 1"
                )));
            }
            for call in &recipe.body {
                recipe_calls.push(call);
                recipe_calls.extend(call.nested_calls());
            }
        }
    }
    for call in recipe_calls {
        if !signatures.contains_key(&call.api_name) {
            return Err(CorpusError::Reference(format!(
                "bug case {id:?}: recipe calls unknown API {:?}",
                call.api_name
            )));
        }
    }
    Ok(())
}
