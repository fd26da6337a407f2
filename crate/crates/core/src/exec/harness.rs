use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command as Process, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use super::protocol::{Command, ExecPayload, Request, Response, SourcePayload, PROTOCOL_VERSION};
use super::{harness_command, ExecJob, Executor, ExecutorConfig, Mutant, MutantSet, Session};
use crate::error::{Error, Result};
use crate::model::{ExecStatus, ExecutionOutcome};

const HANDSHAKE_MS: u64 = 10_000;
const MUTANTS_MS: u64 = 120_000;

/// Executor backed by harness child processes, one per worker session.
#[derive(Debug, Clone)]
pub struct HarnessExecutor {
    command: String,
}

impl HarnessExecutor {
    pub fn new(command: impl Into<String>) -> Self {
        HarnessExecutor { command: command.into() }
    }

    pub fn session(&self, cfg: &ExecutorConfig) -> Result<HarnessSession> {
        HarnessSession::start(&self.command, cfg.grace_ms)
    }

    /// Harness-side canonical key of a source.
    pub fn canonicalize(&self, source: &str, cfg: &ExecutorConfig) -> Result<String> {
        let mut sess = self.session(cfg)?;
        let resp = sess.request(Command::Canonicalize, SourcePayload { source: source.to_string() }, HANDSHAKE_MS)?;
        if let Some(e) = resp.error {
            return Err(Error::Executor(format!("canonicalize failed: {e}")));
        }
        resp.key.ok_or_else(|| Error::Protocol("canonicalize response has no key".into()))
    }
}

impl Executor for HarnessExecutor {
    fn open(&self, cfg: &ExecutorConfig) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(self.session(cfg)?))
    }

    fn mutants(&self, source: &str, cfg: &ExecutorConfig) -> Result<MutantSet> {
        let mut sess = self.session(cfg)?;
        let resp = sess.request(Command::Mutants, SourcePayload { source: source.to_string() }, MUTANTS_MS)?;
        if let Some(e) = resp.error {
            return Ok(MutantSet { mutants: Vec::new(), diagnostic: Some(e) });
        }
        let wire = resp.mutants.ok_or_else(|| Error::Protocol("mutants response has no mutant list".into()))?;
        Ok(MutantSet {
            mutants: wire
                .into_iter()
                .map(|m| Mutant { mutant_id: m.mutant_id, source: m.source, operator: m.operator, line: m.line })
                .collect(),
            diagnostic: None,
        })
    }
}

enum Wait {
    Line(String),
    TimedOut,
    Closed,
}

/// A live harness child. Hung or crashed children are replaced transparently.
pub struct HarnessSession {
    command: String,
    grace_ms: u64,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    next_id: u64,
    restarts: usize,
}

impl HarnessSession {
    fn start(command: &str, grace_ms: u64) -> Result<Self> {
        let (child, stdin, lines) = spawn(command)?;
        let mut sess =
            HarnessSession { command: command.to_string(), grace_ms, child, stdin, lines, next_id: 0, restarts: 0 };
        sess.handshake()?;
        Ok(sess)
    }

    /// Number of times the child has been replaced.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    fn handshake(&mut self) -> Result<()> {
        let resp = self.request(Command::Version, serde_json::json!({}), HANDSHAKE_MS)?;
        match resp.version.as_deref() {
            Some(PROTOCOL_VERSION) => Ok(()),
            Some(other) => Err(Error::Protocol(format!("harness speaks {other}, expected {PROTOCOL_VERSION}"))),
            None => Err(Error::Protocol("harness did not report a version".into())),
        }
    }

    fn restart(&mut self) -> Result<()> {
        self.kill();
        let (child, stdin, lines) = spawn(&self.command)?;
        self.child = child;
        self.stdin = stdin;
        self.lines = lines;
        self.restarts += 1;
        self.handshake()
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn send(&mut self, cmd: Command, payload: impl serde::Serialize) -> Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        let line = Request::new(id, cmd, payload).to_line();
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("writing to harness: {e}")))?;
        Ok(id)
    }

    fn wait_for(&mut self, id: u64, wait_ms: u64) -> Result<Wait> {
        let deadline = Instant::now() + Duration::from_millis(wait_ms);
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => {
                    let resp: Response = serde_json::from_str(&line)
                        .map_err(|e| Error::Protocol(format!("unparseable harness line {line:?}: {e}")))?;
                    if resp.id == id {
                        return Ok(Wait::Line(line));
                    }
                    log::warn!("discarding stale harness response {} while waiting for {id}", resp.id);
                }
                Err(RecvTimeoutError::Timeout) => return Ok(Wait::TimedOut),
                Err(RecvTimeoutError::Disconnected) => return Ok(Wait::Closed),
            }
        }
    }

    /// Sends one request and waits for its response. A silent or dead child is
    /// an error here; [`Session::exec`] maps those to outcomes instead.
    fn request(&mut self, cmd: Command, payload: impl serde::Serialize, wait_ms: u64) -> Result<Response> {
        let id = self.send(cmd, payload)?;
        match self.wait_for(id, wait_ms)? {
            Wait::Line(line) => Ok(serde_json::from_str(&line)?),
            Wait::TimedOut => Err(Error::Protocol(format!("harness did not answer {cmd:?} within {wait_ms} ms"))),
            Wait::Closed => Err(Error::Protocol(format!("harness exited during {cmd:?}"))),
        }
    }
}

impl Session for HarnessSession {
    fn exec(&mut self, job: &ExecJob) -> Result<ExecutionOutcome> {
        let started = Instant::now();
        let payload = ExecPayload {
            solution: job.solution.clone(),
            setup: job.setup.clone(),
            test: job.test.clone(),
            timeout_ms: job.timeout_ms,
        };
        let id = match self.send(Command::Exec, payload) {
            Ok(id) => id,
            Err(e) => {
                self.restart()?;
                return Ok(failure(ExecStatus::Error, started, format!("harness unavailable: {e}")));
            }
        };
        let waited = self.wait_for(id, job.timeout_ms + self.grace_ms);
        match waited {
            Ok(Wait::Line(line)) => {
                let resp: Response = serde_json::from_str(&line)?;
                if let Some(e) = resp.error {
                    return Ok(failure(ExecStatus::Error, started, e));
                }
                let Some(status) = resp.status else {
                    self.restart()?;
                    return Ok(failure(ExecStatus::Error, started, "harness response has no status".into()));
                };
                Ok(ExecutionOutcome {
                    status,
                    covered_lines: resp.covered_lines.unwrap_or_default(),
                    wall_ms: resp.wall_ms.unwrap_or_else(|| started.elapsed().as_millis() as u64),
                    diagnostic: if status == ExecStatus::Pass { String::new() } else { resp.diagnostic.unwrap_or_default() },
                })
            }
            Ok(Wait::TimedOut) => {
                self.restart()?;
                Ok(failure(ExecStatus::Timeout, started, format!("no answer within {} ms; harness restarted", job.timeout_ms)))
            }
            Ok(Wait::Closed) => {
                self.restart()?;
                Ok(failure(ExecStatus::Error, started, "harness exited; restarted".into()))
            }
            Err(e) => {
                self.restart()?;
                Ok(failure(ExecStatus::Error, started, e.to_string()))
            }
        }
    }
}

impl Drop for HarnessSession {
    fn drop(&mut self) {
        self.kill();
    }
}

fn failure(status: ExecStatus, started: Instant, diagnostic: String) -> ExecutionOutcome {
    ExecutionOutcome {
        status,
        covered_lines: Default::default(),
        wall_ms: started.elapsed().as_millis() as u64,
        diagnostic,
    }
}

fn spawn(command: &str) -> Result<(Child, ChildStdin, Receiver<String>)> {
    let (program, args) = harness_command(command);
    if program.is_empty() {
        return Err(Error::Config("empty harness command".into()));
    }
    let mut child = Process::new(&program)
        .args(&args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Executor(format!("cannot start harness {command:?}: {e}")))?;
    let stdin = child.stdin.take().ok_or_else(|| Error::Executor("harness stdin unavailable".into()))?;
    let stdout = child.stdout.take().ok_or_else(|| Error::Executor("harness stdout unavailable".into()))?;
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        return;
                    }
                }
                Err(_) => return,
            }
        }
    });
    Ok((child, stdin, rx))
}
