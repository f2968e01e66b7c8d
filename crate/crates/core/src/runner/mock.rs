//! Deterministic scripted runner, used in-process or behind the wire
//! protocol (`bugport mock-runner`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    to_execution_result, Capabilities, HandshakeReply, HandshakeRequest, Runner, RunnerError, RunnerRequest,
    RunnerResponse, WireException, WireMeasurement, PROTOCOL_VERSION,
};
use crate::corpus::{Anomaly, CorpusError, StructuredCall, Value};
use crate::oracle::{ExecutionResult, ExecutionStatus};
use crate::records::{read_kind, Record};
use crate::render::{case_fingerprint, fingerprint_of_source};

/// What the mock does for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockBehavior {
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<WireException>,
    #[serde(default)]
    pub flags: Vec<Anomaly>,
    /// Raw samples per slot; slots left out get `1.0` per repetition.
    #[serde(default)]
    pub measurements: BTreeMap<String, Vec<f64>>,
    /// Simulated execution time before answering.
    #[serde(default)]
    pub delay_s: f64,
}

impl MockBehavior {
    pub fn completed() -> Self {
        Self {
            status: ExecutionStatus::Completed,
            exception: None,
            flags: Vec::new(),
            measurements: BTreeMap::new(),
            delay_s: 0.0,
        }
    }
}

/// One scripted response. Keyed by an explicit fingerprint, or by the
/// target API and bound arguments the fingerprint is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_api: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_args: Option<BTreeMap<String, Value>>,
    pub response: MockBehavior,
}

impl MockEntry {
    pub fn for_call(call: &StructuredCall, response: MockBehavior) -> Self {
        Self {
            fingerprint: None,
            target_api: Some(call.api_name.clone()),
            bound_args: Some(call.bound_args.clone()),
            response,
        }
    }

    pub fn key(&self) -> Result<String, String> {
        if let Some(fp) = &self.fingerprint {
            return Ok(fp.clone());
        }
        let api = self
            .target_api
            .as_ref()
            .ok_or("mock entry needs a fingerprint or a target_api")?;
        let mut call = StructuredCall::new(api.clone());
        call.bound_args = self.bound_args.clone().unwrap_or_default();
        Ok(case_fingerprint(&call))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    entries: BTreeMap<String, MockBehavior>,
}

/// Resolution of one request against a script.
#[derive(Debug, Clone, PartialEq)]
pub enum MockAction {
    Reply {
        response: RunnerResponse,
        delay_s: f64,
    },
    /// Terminate the session without answering.
    Crash,
}

impl MockScript {
    pub fn from_entries(entries: impl IntoIterator<Item = MockEntry>) -> Result<Self, String> {
        let mut script = Self::default();
        for entry in entries {
            let key = entry.key()?;
            if script.entries.insert(key.clone(), entry.response).is_some() {
                return Err(format!("duplicate mock fingerprint {key}"));
            }
        }
        Ok(script)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CorpusError> {
        let entries = read_kind(path, |r| match r {
            Record::MockResponse(e) => Some(e),
            _ => None,
        })?;
        Self::from_entries(entries).map_err(|m| CorpusError::Invalid(format!("{}: {m}", path.display())))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn respond(&self, request: &RunnerRequest) -> MockAction {
        let behavior = fingerprint_of_source(&request.rendered_source)
            .and_then(|fp| self.entries.get(fp))
            .cloned()
            .unwrap_or_else(MockBehavior::completed);
        if behavior.status == ExecutionStatus::Crashed {
            return MockAction::Crash;
        }
        let mut measurements = BTreeMap::new();
        if behavior.status == ExecutionStatus::Completed {
            for recipe in &request.recipes {
                let samples = behavior
                    .measurements
                    .get(&recipe.slot)
                    .cloned()
                    .unwrap_or_else(|| vec![1.0; recipe.repetitions as usize]);
                measurements.insert(
                    recipe.slot.clone(),
                    WireMeasurement {
                        metric: recipe.metric,
                        samples,
                    },
                );
            }
        }
        MockAction::Reply {
            response: RunnerResponse {
                case_id: request.case_id.clone(),
                status: behavior.status,
                exception: behavior.exception,
                flags: behavior.flags,
                measurements,
                wall_time_s: behavior.delay_s,
            },
            delay_s: behavior.delay_s,
        }
    }
}

fn handshake_reply(protocol: u32) -> HandshakeReply {
    HandshakeReply {
        protocol,
        capabilities: ["memory".to_string(), "time".to_string()].into(),
        dialect: "mock".into(),
    }
}

/// In-process session. Delays are compared against the timeout instead of
/// slept through.
pub struct MockRunner {
    id: String,
    script: Arc<MockScript>,
    api_tokens: Arc<BTreeSet<String>>,
    protocol: u32,
}

impl MockRunner {
    pub fn new(id: impl Into<String>, script: Arc<MockScript>, api_tokens: Arc<BTreeSet<String>>) -> Self {
        Self {
            id: id.into(),
            script,
            api_tokens,
            protocol: PROTOCOL_VERSION,
        }
    }

    /// Pretends to speak another protocol version.
    pub fn with_protocol(mut self, protocol: u32) -> Self {
        self.protocol = protocol;
        self
    }
}

impl Runner for MockRunner {
    fn id(&self) -> &str {
        &self.id
    }

    fn handshake(&mut self) -> Result<Capabilities, RunnerError> {
        Capabilities::check(handshake_reply(self.protocol))
    }

    fn run_case(&mut self, request: &RunnerRequest) -> Result<ExecutionResult, RunnerError> {
        let mut result = ExecutionResult::completed(request.case_id.clone());
        result.runner_id = self.id.clone();
        match self.script.respond(request) {
            MockAction::Crash => Ok(result.with_status(ExecutionStatus::Crashed)),
            MockAction::Reply { delay_s, .. } if delay_s >= request.timeout => {
                result.wall_time_total = request.timeout;
                Ok(result.with_status(ExecutionStatus::Timeout))
            }
            MockAction::Reply { response, .. } => to_execution_result(response, request, &self.id, &self.api_tokens),
        }
    }
}

/// How a stdio session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeOutcome {
    /// Host closed stdin.
    Closed,
    /// A scripted crash; the caller should exit abnormally.
    Crash,
}

/// Serves the wire protocol until the host hangs up or a scripted crash.
pub fn serve_stdio(
    script: &MockScript,
    protocol: u32,
    input: impl BufRead,
    mut output: impl Write,
) -> io::Result<ServeOutcome> {
    let mut lines = input.lines();
    let Some(first) = lines.next().transpose()? else {
        return Ok(ServeOutcome::Closed);
    };
    let hello: HandshakeRequest =
        serde_json::from_str(&first).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    log::debug!("host speaks protocol v{}", hello.protocol);
    writeln!(output, "{}", serde_json::to_string(&handshake_reply(protocol))?)?;
    output.flush()?;

    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: RunnerRequest =
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        match script.respond(&request) {
            MockAction::Crash => return Ok(ServeOutcome::Crash),
            MockAction::Reply { response, delay_s } => {
                if delay_s > 0.0 {
                    std::thread::sleep(Duration::from_secs_f64(delay_s));
                }
                writeln!(output, "{}", serde_json::to_string(&response)?)?;
                output.flush()?;
            }
        }
    }
    Ok(ServeOutcome::Closed)
}
