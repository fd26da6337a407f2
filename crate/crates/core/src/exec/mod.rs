//! Execution of (solution, test) pairs.
//!
//! [`run_matrix`] fans pairs out over a bounded worker pool. Each worker owns
//! one [`Session`]: a harness child process in harness mode, or an in-memory
//! lookup in simulated mode. The assembled grid depends only on the inputs and
//! the executor, never on scheduling.

mod harness;
pub mod protocol;
mod simulated;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use harness::{HarnessExecutor, HarnessSession};
pub use simulated::{sim_label, SimCell, SimMutant, SimOracle, SimTest, SimulatedExecutor};

use crate::error::{Error, Result};
use crate::model::{CodeCandidate, ExecutionMatrix, ExecutionOutcome, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Harness,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub timeout_ms: u64,
    pub worker_count: usize,
    /// Harness command line; a `.py` path is run with `python3`.
    pub harness_path: Option<String>,
    pub mode: ExecMode,
    /// Extra wall time granted beyond `timeout_ms` before the bridge kills a
    /// harness that has not answered.
    pub grace_ms: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            timeout_ms: 10_000,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            harness_path: None,
            mode: ExecMode::Simulated,
            grace_ms: 2_000,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms < 100 {
            return Err(Error::Config(format!("timeout_ms must be at least 100, got {}", self.timeout_ms)));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        if self.mode == ExecMode::Harness && self.harness_path.is_none() {
            return Err(Error::Config("harness mode needs a harness path".into()));
        }
        Ok(())
    }
}

/// One isolated execution request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecJob {
    pub solution: String,
    pub setup: String,
    pub test: String,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub mutant_id: String,
    pub source: String,
    pub operator: String,
    /// 1-based line of the mutated site.
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantSet {
    pub mutants: Vec<Mutant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub trait Session {
    fn exec(&mut self, job: &ExecJob) -> Result<ExecutionOutcome>;
}

pub trait Executor: Send + Sync {
    /// Opens a worker session. Failing to open is fatal for the run.
    fn open(&self, cfg: &ExecutorConfig) -> Result<Box<dyn Session + '_>>;

    /// Deterministic mutants of `source`.
    fn mutants(&self, source: &str, cfg: &ExecutorConfig) -> Result<MutantSet>;
}

/// Runs every `(solutions[i], tests[j])` pair and returns outcomes row-major.
fn run_grid(
    exec: &dyn Executor,
    solutions: &[&str],
    tests: &[&str],
    setup: &str,
    cfg: &ExecutorConfig,
) -> Result<Vec<Vec<ExecutionOutcome>>> {
    cfg.validate()?;
    let cols = tests.len();
    let total = solutions.len() * cols;
    if total == 0 {
        return Ok(vec![Vec::new(); solutions.len()]);
    }
    let workers = cfg.worker_count.min(total).max(1);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<ExecutionOutcome>>> = Mutex::new(vec![None; total]);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let fail = |e: Error| {
                    abort.store(true, Ordering::SeqCst);
                    first_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
                };
                let mut session = match exec.open(cfg) {
                    Ok(sess) => sess,
                    Err(e) => return fail(e),
                };
                loop {
                    if abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= total {
                        return;
                    }
                    let job = ExecJob {
                        solution: solutions[k / cols].to_string(),
                        setup: setup.to_string(),
                        test: tests[k % cols].to_string(),
                        timeout_ms: cfg.timeout_ms,
                    };
                    match session.exec(&job) {
                        Ok(o) => results.lock().unwrap_or_else(|p| p.into_inner())[k] = Some(o),
                        Err(e) => return fail(e),
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let flat = results.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut rows = Vec::with_capacity(solutions.len());
    let mut it = flat.into_iter();
    for i in 0..solutions.len() {
        let row: Option<Vec<ExecutionOutcome>> = it.by_ref().take(cols).collect();
        rows.push(row.ok_or_else(|| Error::Executor(format!("row {i} incomplete")))?);
    }
    Ok(rows)
}

/// Full Z x M grid of candidates against tests.
pub fn run_matrix(
    exec: &dyn Executor,
    task_id: &str,
    candidates: &[CodeCandidate],
    tests: &[TestCase],
    setup: &str,
    cfg: &ExecutorConfig,
) -> Result<ExecutionMatrix> {
    let solutions: Vec<&str> = candidates.iter().map(|c| c.source.as_str()).collect();
    let test_sources: Vec<&str> = tests.iter().map(|t| t.source.as_str()).collect();
    let cells = run_grid(exec, &solutions, &test_sources, setup, cfg)?;
    Ok(ExecutionMatrix {
        task_id: task_id.to_string(),
        candidates: candidates.iter().map(|c| c.candidate_index).collect(),
        tests: tests.iter().map(|t| t.stub_id).collect(),
        cells,
    })
}

/// One solution against every test.
pub fn run_against_source(
    exec: &dyn Executor,
    source: &str,
    tests: &[TestCase],
    setup: &str,
    cfg: &ExecutorConfig,
) -> Result<Vec<ExecutionOutcome>> {
    let test_sources: Vec<&str> = tests.iter().map(|t| t.source.as_str()).collect();
    Ok(run_grid(exec, &[source], &test_sources, setup, cfg)?.pop().unwrap_or_default())
}

/// Several solutions (e.g. mutants) against every test, one row each.
pub fn run_sources(
    exec: &dyn Executor,
    sources: &[&str],
    tests: &[TestCase],
    setup: &str,
    cfg: &ExecutorConfig,
) -> Result<Vec<Vec<ExecutionOutcome>>> {
    let test_sources: Vec<&str> = tests.iter().map(|t| t.source.as_str()).collect();
    run_grid(exec, sources, &test_sources, setup, cfg)
}

pub fn request_mutants(exec: &dyn Executor, source: &str, cfg: &ExecutorConfig) -> Result<MutantSet> {
    exec.mutants(source, cfg)
}

/// Builds the executor named by `cfg.mode`. Simulated mode needs an oracle.
pub fn build_executor(cfg: &ExecutorConfig, oracle: Option<SimOracle>) -> Result<Box<dyn Executor>> {
    cfg.validate()?;
    match cfg.mode {
        ExecMode::Simulated => {
            let oracle = oracle.ok_or_else(|| Error::Config("simulated mode needs an oracle file".into()))?;
            Ok(Box::new(SimulatedExecutor::new(oracle)))
        }
        ExecMode::Harness => {
            let path = cfg.harness_path.clone().unwrap_or_default();
            Ok(Box::new(HarnessExecutor::new(path)))
        }
    }
}

pub(crate) fn harness_command(path: &str) -> (String, Vec<String>) {
    let mut parts: Vec<String> = path.split_whitespace().map(str::to_string).collect();
    if parts.len() == 1 && parts[0].ends_with(".py") {
        return ("python3".into(), parts);
    }
    let program = if parts.is_empty() { String::new() } else { parts.remove(0) };
    (program, parts)
}

