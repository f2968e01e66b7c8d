//! Line-delimited JSON records.
//!
//! Every file the pipeline reads or writes holds one JSON object per line
//! with a `"kind"` discriminator. Blank lines and lines starting with `//`
//! are skipped on read.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analyzer::FunctionGroup;
use crate::corpus::{ApiSignature, BugCase, CallStackTrace, CorpusError, SignaturePair, SourceFunction};
use crate::generator::{SkipRecord, SynthesizedCase};
use crate::matcher::CandidatePair;
use crate::oracle::VerdictRecord;
use crate::runner::MockEntry;
use crate::sampler::IssueRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Signature(ApiSignature),
    SourceFunction(SourceFunction),
    Trace(CallStackTrace),
    BugCase(BugCase),
    SignaturePair(SignaturePair),
    Issue(IssueRecord),
    FunctionGroup(FunctionGroup),
    CandidatePair(CandidatePair),
    SynthesizedCase(SynthesizedCase),
    Skip(SkipRecord),
    Verdict(VerdictRecord),
    MockResponse(MockEntry),
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::Signature(_) => "signature",
            Record::SourceFunction(_) => "source_function",
            Record::Trace(_) => "trace",
            Record::BugCase(_) => "bug_case",
            Record::SignaturePair(_) => "signature_pair",
            Record::Issue(_) => "issue",
            Record::FunctionGroup(_) => "function_group",
            Record::CandidatePair(_) => "candidate_pair",
            Record::SynthesizedCase(_) => "synthesized_case",
            Record::Skip(_) => "skip",
            Record::Verdict(_) => "verdict",
            Record::MockResponse(_) => "mock_response",
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses every record in a file, returning each with its 1-based line.
pub fn read_records(path: &Path) -> Result<Vec<(usize, Record)>, CorpusError> {
    read_lines(path)
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        let record = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("{e}: {}", snippet(trimmed)),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

fn snippet(line: &str) -> String {
    const MAX: usize = 80;
    if line.chars().count() <= MAX {
        line.to_string()
    } else {
        let head: String = line.chars().take(MAX).collect();
        format!("{head}...")
    }
}

/// Reads only the records of one kind, failing on any other kind.
pub fn read_kind<T>(path: &Path, pick: impl Fn(Record) -> Option<T>) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (line, record) in read_records(path)? {
        let kind = record.kind();
        match pick(record) {
            Some(item) => out.push(item),
            None => {
                return Err(CorpusError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("unexpected record kind {kind:?}"),
                })
            }
        }
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize to JSON"));
        out.push('\n');
    }
    out
}

/// Writes to a sibling temp file and renames it over `path`, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    {
        let mut file = fs::File::create(tmp).map_err(|e| io_err(tmp, e))?;
        file.write_all(contents).map_err(|e| io_err(tmp, e))?;
        file.sync_all().map_err(|e| io_err(tmp, e))?;
    }
    fs::rename(tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_records<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    write_atomic(path, to_jsonl(items).as_bytes())
}
