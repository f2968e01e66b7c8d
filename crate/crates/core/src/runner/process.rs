//! Runner sessions backed by a child process.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{
    to_execution_result, Capabilities, HandshakeReply, HandshakeRequest, Runner, RunnerError, RunnerRequest,
    RunnerResponse, PROTOCOL_VERSION,
};
use crate::oracle::{ExecutionResult, ExecutionStatus};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Session {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Spawns the runner command lazily and again after every crash or
/// timeout, so one bad case never takes down the rest of the batch.
pub struct ProcessRunner {
    id: String,
    argv: Vec<String>,
    api_tokens: Arc<BTreeSet<String>>,
    session: Option<Session>,
    capabilities: Option<Capabilities>,
}

impl ProcessRunner {
    pub fn new(id: impl Into<String>, command: &str, api_tokens: Arc<BTreeSet<String>>) -> Result<Self, RunnerError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| RunnerError::Spawn(format!("cannot parse runner command {command:?}")))?;
        Ok(Self {
            id: id.into(),
            argv,
            api_tokens,
            session: None,
            capabilities: None,
        })
    }

    fn spawn(&self) -> Result<Session, RunnerError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| RunnerError::Spawn(format!("{}: {e}", self.argv[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Session { child, stdin, lines })
    }

    fn connect(&mut self) -> Result<(), RunnerError> {
        if self.session.is_some() {
            return Ok(());
        }
        let mut session = self.spawn()?;
        let hello = serde_json::to_string(&HandshakeRequest {
            protocol: PROTOCOL_VERSION,
        })
        .expect("serializes");
        if writeln!(session.stdin, "{hello}")
            .and_then(|_| session.stdin.flush())
            .is_err()
        {
            session.kill();
            return Err(RunnerError::RunnerDead("runner exited before the handshake".into()));
        }
        let line = match session.lines.recv_timeout(HANDSHAKE_TIMEOUT) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                session.kill();
                return Err(RunnerError::RunnerDead("no handshake reply".into()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                session.kill();
                return Err(RunnerError::RunnerDead("runner exited during the handshake".into()));
            }
        };
        let reply: HandshakeReply = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                session.kill();
                return Err(RunnerError::Protocol(format!("bad handshake reply: {e}")));
            }
        };
        match Capabilities::check(reply) {
            Ok(caps) => {
                self.capabilities = Some(caps);
                self.session = Some(session);
                Ok(())
            }
            Err(e) => {
                session.kill();
                Err(e)
            }
        }
    }

    fn drop_session(&mut self) {
        if let Some(session) = self.session.take() {
            session.kill();
        }
    }
}

impl Drop for ProcessRunner {
    fn drop(&mut self) {
        if let Some(mut session) = self.session.take() {
            // Closing stdin lets a well-behaved runner exit on its own.
            drop(session.stdin);
            let deadline = Instant::now() + Duration::from_millis(200);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = session.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = session.child.kill();
            let _ = session.child.wait();
        }
    }
}

impl Runner for ProcessRunner {
    fn id(&self) -> &str {
        &self.id
    }

    fn handshake(&mut self) -> Result<Capabilities, RunnerError> {
        self.connect()?;
        Ok(self.capabilities.clone().expect("set by connect"))
    }

    fn run_case(&mut self, request: &RunnerRequest) -> Result<ExecutionResult, RunnerError> {
        self.connect()?;
        let session = self.session.as_mut().expect("connected");
        let line = serde_json::to_string(request).expect("serializes");
        let started = Instant::now();
        if writeln!(session.stdin, "{line}")
            .and_then(|_| session.stdin.flush())
            .is_err()
        {
            self.drop_session();
            return Err(RunnerError::RunnerDead("runner closed its input".into()));
        }

        let mut result = ExecutionResult::completed(request.case_id.clone());
        result.runner_id = self.id.clone();
        match session.lines.recv_timeout(Duration::from_secs_f64(request.timeout)) {
            Ok(reply) => {
                let parsed = serde_json::from_str::<RunnerResponse>(&reply)
                    .map_err(|e| RunnerError::Protocol(format!("malformed response: {e}")))
                    .and_then(|r| to_execution_result(r, request, &self.id, &self.api_tokens));
                if parsed.is_err() {
                    self.drop_session();
                }
                parsed
            }
            Err(RecvTimeoutError::Timeout) => {
                log::warn!("{}: case {} timed out, restarting runner", self.id, request.case_id);
                self.drop_session();
                result.wall_time_total = request.timeout;
                Ok(result.with_status(ExecutionStatus::Timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                log::warn!("{}: runner died on case {}, restarting", self.id, request.case_id);
                self.drop_session();
                result.wall_time_total = started.elapsed().as_secs_f64();
                Ok(result.with_status(ExecutionStatus::Crashed))
            }
        }
    }
}
