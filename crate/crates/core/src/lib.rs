//! Ports confirmed API bug cases onto analogous APIs.
//!
//! The pipeline ingests a corpus of API signatures, source-function
//! metadata, runtime call-stack traces and confirmed bug cases. It groups
//! analogous source functions, matches APIs whose canonicalized execution
//! contexts overlap, synthesizes a test case for each analogous target API
//! out of the source bug's reproduction, and judges the execution result
//! against the source bug's behavior (status, value or performance).
//!
//! Stages:
//!
//! * [`corpus`]: domain types, the line-delimited record format, validation.
//! * [`sampler`]: screening of exported issue dumps into bug cases.
//! * [`analyzer`]: source-function similarity and grouping.
//! * [`matcher`]: context canonicalization, API pair matching and filtering.
//! * [`generator`] / [`render`]: test-case synthesis and text rendering.
//! * [`oracle`]: verdicts from execution results.
//! * [`runner`]: the newline-delimited JSON runner protocol and a mock runner.
//! * [`pipeline`]: configuration, stage orchestration, reports and metrics.

pub mod analyzer;
pub mod corpus;
pub mod generator;
pub mod matcher;
pub mod oracle;
pub mod pipeline;
pub mod records;
pub mod render;
pub mod runner;
pub mod sampler;

pub use corpus::{jaccard, Corpus, CorpusError};
