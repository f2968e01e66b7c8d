//! Runner sessions and the newline-delimited JSON wire protocol.
//!
//! A session starts with a handshake: the host writes `{"protocol": 1}`
//! and the runner answers with its own version, capability list and
//! dialect tag. After that each request line
//! `{"case_id", "source", "recipes", "timeout_s"}` is answered by exactly
//! one response line
//! `{"case_id", "status", "exception"?, "flags", "measurements", "wall_time_s"}`.
//! One request is in flight per session.

mod mock;
mod process;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Anomaly, Metric};
use crate::oracle::{normalize_exception, ExecutionResult, ExecutionStatus, MeasurementSample};

pub use mock::{serve_stdio, MockAction, MockBehavior, MockEntry, MockRunner, MockScript, ServeOutcome};
pub use process::ProcessRunner;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("runner speaks protocol v{runner}, host speaks v{host}")]
    VersionMismatch { host: u32, runner: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("runner session lost: {0}")]
    RunnerDead(String),
    #[error("cannot start runner: {0}")]
    Spawn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeRequest {
    pub protocol: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeReply {
    pub protocol: u32,
    #[serde(default)]
    pub capabilities: BTreeSet<String>,
    #[serde(default)]
    pub dialect: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub time_metric: bool,
    pub memory_metric: bool,
    pub dialect: String,
}

impl Capabilities {
    fn check(reply: HandshakeReply) -> Result<Self, RunnerError> {
        if reply.protocol != PROTOCOL_VERSION {
            return Err(RunnerError::VersionMismatch {
                host: PROTOCOL_VERSION,
                runner: reply.protocol,
            });
        }
        Ok(Self {
            time_metric: reply.capabilities.contains("time"),
            memory_metric: reply.capabilities.contains("memory"),
            dialect: reply.dialect,
        })
    }

    pub fn supports(&self, metric: Metric) -> bool {
        match metric {
            Metric::WallTimeSeconds => self.time_metric,
            Metric::PeakMemoryMegabytes => self.memory_metric,
        }
    }
}

/// What a runner needs to know about one measurement slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeDescriptor {
    pub slot: String,
    pub metric: Metric,
    pub repetitions: u32,
    pub warmup_runs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerRequest {
    pub case_id: String,
    #[serde(rename = "source")]
    pub rendered_source: String,
    pub recipes: Vec<RecipeDescriptor>,
    #[serde(rename = "timeout_s")]
    pub timeout: f64,
}

impl RunnerRequest {
    pub fn new(
        case_id: impl Into<String>,
        rendered_source: String,
        recipes: Vec<RecipeDescriptor>,
        timeout: f64,
    ) -> Self {
        assert!(timeout > 0.0, "timeout must be positive");
        Self {
            case_id: case_id.into(),
            rendered_source,
            recipes,
            timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireException {
    #[serde(rename = "type")]
    pub exception_type: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMeasurement {
    pub metric: Metric,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerResponse {
    pub case_id: String,
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<WireException>,
    #[serde(default)]
    pub flags: Vec<Anomaly>,
    #[serde(default)]
    pub measurements: BTreeMap<String, WireMeasurement>,
    #[serde(default)]
    pub wall_time_s: f64,
}

/// Host-side view of a response: exception normalized, samples checked
/// against the declared recipes and aggregated.
pub fn to_execution_result(
    response: RunnerResponse,
    request: &RunnerRequest,
    runner_id: &str,
    api_tokens: &BTreeSet<String>,
) -> Result<ExecutionResult, RunnerError> {
    let proto = |m: String| Err(RunnerError::Protocol(m));
    if response.case_id != request.case_id {
        return proto(format!(
            "response for {:?} while {:?} was in flight",
            response.case_id, request.case_id
        ));
    }
    let exception_signature = match (response.status, response.exception) {
        (ExecutionStatus::Raised, Some(e)) => Some(normalize_exception(&e.exception_type, &e.message, api_tokens)),
        (ExecutionStatus::Raised, None) => return proto("status raised without an exception".into()),
        _ => None,
    };
    let mut measurements = BTreeMap::new();
    if response.status == ExecutionStatus::Completed {
        for recipe in &request.recipes {
            let Some(m) = response.measurements.get(&recipe.slot) else {
                return proto(format!("no measurement for slot {:?}", recipe.slot));
            };
            if m.metric != recipe.metric {
                return proto(format!(
                    "slot {:?} measured {} instead of {}",
                    recipe.slot, m.metric, recipe.metric
                ));
            }
            if m.samples.len() != recipe.repetitions as usize {
                return proto(format!(
                    "slot {:?} has {} samples, expected {}",
                    recipe.slot,
                    m.samples.len(),
                    recipe.repetitions
                ));
            }
            let sample = MeasurementSample::from_samples(m.metric, m.samples.clone()).ok_or_else(|| {
                RunnerError::Protocol(format!("slot {:?} has negative or non-finite samples", recipe.slot))
            })?;
            measurements.insert(recipe.slot.clone(), sample);
        }
    }
    Ok(ExecutionResult {
        case_id: response.case_id,
        status: response.status,
        exception_signature,
        output_flags: response.flags.into_iter().collect(),
        measurements,
        runner_id: runner_id.to_string(),
        wall_time_total: response.wall_time_s,
    })
}

/// A live runner session.
pub trait Runner: Send {
    fn id(&self) -> &str;
    fn handshake(&mut self) -> Result<Capabilities, RunnerError>;
    /// Executes one case. Timeouts and crashes come back as results; only
    /// protocol violations and lost sessions are errors.
    fn run_case(&mut self, request: &RunnerRequest) -> Result<ExecutionResult, RunnerError>;
}

/// How to start runner sessions.
#[derive(Debug, Clone)]
pub enum RunnerSpec {
    /// In-process deterministic mock.
    Mock(Arc<MockScript>),
    /// External command speaking the wire protocol on stdin/stdout.
    Command(String),
}

impl RunnerSpec {
    pub fn start(&self, session: usize, api_tokens: Arc<BTreeSet<String>>) -> Result<Box<dyn Runner>, RunnerError> {
        match self {
            RunnerSpec::Mock(script) => Ok(Box::new(MockRunner::new(
                format!("mock-{session}"),
                Arc::clone(script),
                api_tokens,
            ))),
            RunnerSpec::Command(cmd) => Ok(Box::new(ProcessRunner::new(
                format!("proc-{session}"),
                cmd,
                api_tokens,
            )?)),
        }
    }
}
