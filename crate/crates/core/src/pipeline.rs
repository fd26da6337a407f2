//! End-to-end wiring: generation, consensus verification, evaluation.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::{label_tests, partition, select_best};
use crate::codegen::{generate_candidates, CoveConfig};
use crate::error::{Error, Result};
use crate::exec::{
    build_executor, request_mutants, run_against_source, run_matrix, run_sources, ExecMode, Executor, ExecutorConfig,
    SimOracle,
};
use crate::metrics::{suite_metrics, SuiteMetrics, SuiteView, TaskEvidence};
use crate::model::{
    validate_task, AgreementSet, CodeCandidate, ExecutionMatrix, ExecutionOutcome, Generator, Strategy, Task,
    TestCase, TestLabel, Validity,
};
use crate::provider::{
    CacheProvider, Counting, GenContext, LiveConfig, LiveProvider, MockProvider, MockScript, PromptSet, Provider,
    Sampling,
};
use crate::testgen::synthesize_suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    Replay,
    Mock,
}

/// Last stage a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Verify,
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub generator: Generator,
    pub m: usize,
    pub n: usize,
    pub z: usize,
    pub max_rounds: usize,
    #[serde(default)]
    pub per_question: bool,
    pub model_id: String,
    pub provider: ProviderMode,
    /// Response cache. Required for replay; records when set in other modes.
    pub cache_dir: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub templates_dir: Option<PathBuf>,
    pub sampling: Sampling,
    pub executor: ExecutorConfig,
    /// Simulated-executor fixture.
    pub oracle: Option<PathBuf>,
    pub seed: u64,
    pub stage: Stage,
    /// Process tasks concurrently. Each task still bounds its own executor pool.
    pub parallel_tasks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Sctg,
            generator: Generator::Cove,
            m: 10,
            n: 5,
            z: 5,
            max_rounds: 3,
            per_question: false,
            model_id: "mock".into(),
            provider: ProviderMode::Mock,
            cache_dir: None,
            mock_script: None,
            endpoint: None,
            templates_dir: None,
            sampling: Sampling::default(),
            executor: ExecutorConfig::default(),
            oracle: None,
            seed: 0,
            stage: Stage::Evaluate,
            parallel_tasks: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.z == 0 {
            return Err(Error::Config("M and Z must be at least 1".into()));
        }
        if self.strategy == Strategy::Sctg && self.n < 2 {
            return Err(Error::Config(format!("SCTG requires N >= 2, got {}", self.n)));
        }
        if self.generator == Generator::Cove && self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        match self.provider {
            ProviderMode::Replay => match &self.cache_dir {
                Some(d) if d.is_dir() => {}
                Some(d) => return Err(Error::Config(format!("replay cache directory {} does not exist", d.display()))),
                None => return Err(Error::Config("replay mode needs --cache-dir".into())),
            },
            ProviderMode::Mock if self.mock_script.is_none() => {
                return Err(Error::Config("mock mode needs a mock script".into()))
            }
            ProviderMode::Live if self.endpoint.is_none() => {
                return Err(Error::Config("live mode needs an endpoint".into()))
            }
            _ => {}
        }
        if self.stage > Stage::Generate {
            self.executor.validate()?;
            if self.executor.mode == ExecMode::Simulated && self.oracle.is_none() {
                return Err(Error::Config("simulated execution needs an oracle file".into()));
            }
        }
        Ok(())
    }

    /// Short stable digest of the configuration, used in run directory names.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&json))[..12].to_string()
    }

    pub fn label(&self) -> String {
        format!("{}+{}", self.strategy, self.generator)
    }
}

/// Name of the ablation a (strategy, generator) pair corresponds to.
pub fn ablation_tag(strategy: Strategy, generator: Generator) -> &'static str {
    match (strategy, generator) {
        (Strategy::Sctg, Generator::Cove) => "full",
        (Strategy::Sctg, Generator::Vanilla) => "w/o CoVe",
        (Strategy::Tstg, Generator::Vanilla) => "w/o CoVe & SC",
        (Strategy::Htg, Generator::Vanilla) => "full-ablation baseline",
        (Strategy::Tstg, Generator::Cove) => "w/o SC",
        (Strategy::Htg, Generator::Cove) => "w/o SC & TSG",
    }
}

/// The four configurations compared in an ablation, most complete first.
pub const ABLATION_LATTICE: [(Strategy, Generator); 4] = [
    (Strategy::Sctg, Generator::Cove),
    (Strategy::Sctg, Generator::Vanilla),
    (Strategy::Tstg, Generator::Vanilla),
    (Strategy::Htg, Generator::Vanilla),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stubs_requested: usize,
    pub stubs_kept: usize,
    pub n_tests: usize,
    pub n_candidates: usize,
    pub agreement_sets: Vec<AgreementSet>,
    /// `candidate_index` of the representative solution.
    pub selected: Option<usize>,
    pub labels: Vec<TestLabel>,
    pub requests: usize,
    pub diagnostics: Vec<String>,
}

impl TaskReport {
    fn failed(task_id: &str, error: &Error, requests: usize) -> Self {
        TaskReport {
            task_id: task_id.to_string(),
            status: TaskStatus::Failed,
            error: Some(error.to_string()),
            stubs_requested: 0,
            stubs_kept: 0,
            n_tests: 0,
            n_candidates: 0,
            agreement_sets: Vec::new(),
            selected: None,
            labels: Vec::new(),
            requests,
            diagnostics: Vec::new(),
        }
    }

    pub fn kept(&self) -> usize {
        self.labels.iter().filter(|l| l.predicted == Validity::Valid).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Wall-clock start; the only field allowed to differ between replays.
    pub timestamp: String,
    pub config: RunConfig,
    pub label: String,
    pub ablation: String,
    pub tasks: Vec<TaskReport>,
    pub pre_filter: Option<SuiteMetrics>,
    pub post_filter: Option<SuiteMetrics>,
    pub requests: usize,
    pub diagnostics: Vec<String>,
}

impl RunReport {
    pub fn failed_tasks(&self) -> Vec<&str> {
        self.tasks.iter().filter(|t| t.status == TaskStatus::Failed).map(|t| t.task_id.as_str()).collect()
    }

    /// The report with its timestamp blanked, for determinism comparisons.
    pub fn without_timestamp(&self) -> RunReport {
        RunReport { timestamp: String::new(), ..self.clone() }
    }

    /// Checks that the filtered suite size equals the number of predicted-valid labels.
    pub fn check_kept_count(&self) -> Result<()> {
        if let Some(post) = &self.post_filter {
            let labeled: usize = self
                .tasks
                .iter()
                .filter(|t| t.status == TaskStatus::Ok && !t.labels.iter().any(|l| l.actual.is_none()))
                .map(TaskReport::kept)
                .sum();
            if post.counts.n_kept != labeled {
                return Err(Error::Precondition(format!(
                    "post-filter kept {} tests but {} are predicted valid",
                    post.counts.n_kept, labeled
                )));
            }
        }
        Ok(())
    }
}

/// Raw per-task artifacts written next to the report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaskArtifacts {
    pub tests: Vec<TestCase>,
    pub candidates: Vec<CodeCandidate>,
    pub matrix: Option<ExecutionMatrix>,
    pub ground_truth_outcomes: Vec<ExecutionOutcome>,
    pub evidence: Option<TaskEvidence>,
}

pub struct RunOutput {
    pub report: RunReport,
    /// Sorted by task id, aligned with `report.tasks`.
    pub artifacts: Vec<(String, TaskArtifacts)>,
}

/// Reads one JSON task per line. Blank lines are skipped.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tasks = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::TaskRecord { path: path.to_path_buf(), line: lineno, message };
        let task: Task = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        let report = validate_task(&task);
        if !report.is_ok() {
            return Err(record_err(report.to_string()));
        }
        if !seen.insert(task.task_id.clone()) {
            return Err(record_err(format!("duplicate task_id {:?}", task.task_id)));
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        log::warn!("{} contains no tasks", path.display());
    }
    Ok(tasks)
}

fn build_provider(cfg: &RunConfig) -> Result<Box<dyn Provider>> {
    let base: Box<dyn Provider> = match cfg.provider {
        ProviderMode::Replay => {
            let dir = cfg.cache_dir.as_ref().ok_or_else(|| Error::Config("replay mode needs --cache-dir".into()))?;
            return Ok(Box::new(CacheProvider::replay_only(dir)?));
        }
        ProviderMode::Mock => {
            let path = cfg.mock_script.as_ref().ok_or_else(|| Error::Config("mock mode needs a mock script".into()))?;
            Box::new(MockProvider::new(MockScript::load(path)?).with_seed(cfg.seed))
        }
        ProviderMode::Live => {
            let endpoint = cfg.endpoint.as_ref().ok_or_else(|| Error::Config("live mode needs an endpoint".into()))?;
            Box::new(LiveProvider::new(LiveConfig::from_env(endpoint.clone())?)?)
        }
    };
    Ok(match &cfg.cache_dir {
        Some(dir) => Box::new(CacheProvider::recording(dir, base)),
        None => base,
    })
}

/// Lines of `source` that can be covered: not blank and not comment-only.
pub fn coverable_lines(source: &str) -> BTreeSet<u32> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, _)| i as u32 + 1)
        .collect()
}

struct Env<'a> {
    ctx: GenContext<'a>,
    executor: Option<&'a dyn Executor>,
    cfg: &'a RunConfig,
}

fn process_task(env: &Env<'_>, task: &Task) -> Result<(TaskReport, TaskArtifacts)> {
    let cfg = env.cfg;
    let suite = synthesize_suite(&env.ctx, task, cfg.strategy, cfg.m, cfg.n)?;
    let cove = CoveConfig { max_rounds: cfg.max_rounds.max(1), per_question: cfg.per_question };
    let batch = generate_candidates(&env.ctx, task, cfg.z, cfg.generator, cove)?;
    if batch.candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut report = TaskReport {
        task_id: task.task_id.clone(),
        status: TaskStatus::Ok,
        error: None,
        stubs_requested: suite.stubs_requested,
        stubs_kept: suite.stubs_kept,
        n_tests: suite.tests.len(),
        n_candidates: batch.candidates.len(),
        agreement_sets: Vec::new(),
        selected: None,
        labels: Vec::new(),
        requests: 0,
        diagnostics: suite.diagnostics.iter().chain(&batch.diagnostics).cloned().collect(),
    };
    let mut artifacts = TaskArtifacts { tests: suite.tests, candidates: batch.candidates, ..Default::default() };
    let Some(exec) = env.executor.filter(|_| cfg.stage >= Stage::Verify) else {
        return Ok((report, artifacts));
    };

    let setup = task.setup_code.as_deref().unwrap_or("");
    let tests = &artifacts.tests;
    let matrix = run_matrix(exec, &task.task_id, &artifacts.candidates, tests, setup, &cfg.executor)?;
    let mut predicted = vec![false; tests.len()];
    if !tests.is_empty() {
        let part = partition(&matrix);
        report.diagnostics.extend(part.diagnostic.clone());
        let best = select_best(&part.sets, &matrix)?;
        report.selected = Some(best.candidate_index);
        let labels = label_tests(best.row, &matrix, None)?;
        for (j, l) in labels.iter().enumerate() {
            predicted[j] = l.predicted == Validity::Valid;
        }
        report.labels = labels;
        report.agreement_sets = part.sets;
    } else {
        report.diagnostics.push(format!("{}: no tests to verify", task.task_id));
    }
    artifacts.matrix = Some(matrix);

    let ground_truth = match &task.ground_truth {
        Some(gt) if cfg.stage >= Stage::Evaluate => gt,
        _ => return Ok((report, artifacts)),
    };
    let outcomes = run_against_source(exec, ground_truth, tests, setup, &cfg.executor)?;
    let actual_valid: Vec<bool> = outcomes.iter().map(ExecutionOutcome::passed).collect();
    for (l, &v) in report.labels.iter_mut().zip(&actual_valid) {
        l.actual = Some(Validity::from_pass(v));
    }
    let lines = coverable_lines(ground_truth);
    let covered = outcomes.iter().map(|o| o.covered_lines.intersection(&lines).copied().collect()).collect();
    let mutant_set = request_mutants(exec, ground_truth, &cfg.executor)?;
    report.diagnostics.extend(mutant_set.diagnostic.clone());
    let mutant_pass = if mutant_set.mutants.is_empty() {
        None
    } else {
        let sources: Vec<&str> = mutant_set.mutants.iter().map(|m| m.source.as_str()).collect();
        let rows = run_sources(exec, &sources, tests, setup, &cfg.executor)?;
        Some(rows.iter().map(|r| r.iter().map(ExecutionOutcome::passed).collect()).collect())
    };
    artifacts.evidence = Some(TaskEvidence {
        task_id: task.task_id.clone(),
        kept: predicted,
        actual_valid,
        covered,
        total_lines: lines.len() as u32,
        mutant_pass,
    });
    artifacts.ground_truth_outcomes = outcomes;
    Ok((report, artifacts))
}

/// Runs every task through the configured stages. Failures inside one task are
/// recorded on that task and never abort the run.
pub fn run_pipeline(tasks: &[Task], cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let prompts = match &cfg.templates_dir {
        Some(dir) => PromptSet::with_overrides(dir)?,
        None => PromptSet::default(),
    };
    let provider = build_provider(cfg)?;
    let executor = if cfg.stage >= Stage::Verify {
        let oracle = cfg.oracle.as_deref().map(SimOracle::load).transpose()?;
        Some(build_executor(&cfg.executor, oracle)?)
    } else {
        None
    };

    let run_one = |task: &Task| {
        let counting = Counting::new(provider.as_ref());
        let env = Env {
            ctx: GenContext { provider: &counting, prompts: &prompts, sampling: cfg.sampling, model_id: cfg.model_id.clone() },
            executor: executor.as_deref(),
            cfg,
        };
        let result = process_task(&env, task);
        let requests = counting.count();
        match result {
            Ok((mut report, artifacts)) => {
                report.requests = requests;
                (report, artifacts)
            }
            Err(e) => {
                log::warn!("{}: quarantined: {e}", task.task_id);
                (TaskReport::failed(&task.task_id, &e, requests), TaskArtifacts::default())
            }
        }
    };
    let mut results: Vec<(TaskReport, TaskArtifacts)> = if cfg.parallel_tasks {
        tasks.par_iter().map(run_one).collect()
    } else {
        tasks.iter().map(run_one).collect()
    };
    results.sort_by(|a, b| a.0.task_id.cmp(&b.0.task_id));

    let evidence: Vec<TaskEvidence> = results.iter().filter_map(|(_, a)| a.evidence.clone()).collect();
    let (pre_filter, post_filter) = if evidence.is_empty() {
        (None, None)
    } else {
        (Some(suite_metrics(&evidence, SuiteView::Unfiltered)?), Some(suite_metrics(&evidence, SuiteView::Filtered)?))
    };
    let mut diagnostics = Vec::new();
    if tasks.is_empty() {
        diagnostics.push("no tasks".to_string());
    }
    for (r, _) in &results {
        if let Some(e) = &r.error {
            diagnostics.push(format!("{}: failed: {e}", r.task_id));
        }
    }
    let report = RunReport {
        timestamp,
        config: cfg.clone(),
        label: cfg.label(),
        ablation: ablation_tag(cfg.strategy, cfg.generator).to_string(),
        requests: results.iter().map(|(r, _)| r.requests).sum(),
        tasks: results.iter().map(|(r, _)| r.clone()).collect(),
        pre_filter,
        post_filter,
        diagnostics,
    };
    report.check_kept_count()?;
    let artifacts = results.into_iter().map(|(r, a)| (r.task_id, a)).collect();
    Ok(RunOutput { report, artifacts })
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Persists a run as `<out>/runs/<timestamp>-<config digest>/` and returns that
/// directory.
pub fn write_run_dir(out: &Path, run: &RunOutput) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = out.join("runs");
    let mut dir = base.join(format!("{stamp}-{}", run.report.config.digest()));
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{}-{k}", run.report.config.digest()));
        k += 1;
    }
    let tasks_dir = dir.join("tasks");
    std::fs::create_dir_all(&tasks_dir).map_err(|e| Error::io(&tasks_dir, e))?;
    write_json(&dir.join("config.json"), &run.report.config)?;
    for (task_id, a) in &run.artifacts {
        let td = tasks_dir.join(file_safe(task_id));
        std::fs::create_dir_all(&td).map_err(|e| Error::io(&td, e))?;
        write_json(&td.join("tests.json"), &a.tests)?;
        write_json(&td.join("candidates.json"), &a.candidates)?;
        if let Some(m) = &a.matrix {
            write_json(&td.join("matrix.json"), m)?;
        }
        if let Some(ev) = &a.evidence {
            write_json(&td.join("evidence.json"), ev)?;
        }
    }
    crate::report::emit_report(&run.report, &dir, crate::report::ReportFormat::Both)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants() {
        let mut cfg = RunConfig { mock_script: Some("m.json".into()), oracle: Some("o.json".into()), ..Default::default() };
        assert!(cfg.validate().is_ok());
        cfg.n = 1;
        assert!(cfg.validate().unwrap_err().to_string().contains("N >= 2"));
        cfg.strategy = Strategy::Tstg;
        assert!(cfg.validate().is_ok());
        cfg.provider = ProviderMode::Replay;
        cfg.cache_dir = Some("/nonexistent/cache".into());
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn digest_tracks_config() {
        let a = RunConfig::default();
        let b = RunConfig { z: 7, ..RunConfig::default() };
        assert_eq!(a.digest(), RunConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 12);
    }

    #[test]
    fn coverable_lines_skip_blank_and_comments() {
        let src = "def f(x):\n\n    # note\n    return x\n";
        assert_eq!(coverable_lines(src).into_iter().collect::<Vec<_>>(), vec![1, 4]);
    }

    #[test]
    fn ablation_tags() {
        assert_eq!(ablation_tag(Strategy::Htg, Generator::Vanilla), "full-ablation baseline");
        assert_eq!(ABLATION_LATTICE.len(), 4);
    }

    #[test]
    fn load_tasks_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tasks.jsonl");
        std::fs::write(
            &p,
            "{\"task_id\":\"a\",\"description\":\"d\",\"entry_point\":\"f\",\"signature\":\"def f():\"}\n\n{\"description\":\"d\"}\n",
        )
        .unwrap();
        let err = load_tasks(&p).unwrap_err().to_string();
        assert!(err.contains(":3"), "{err}");
        assert!(err.contains("task_id"), "{err}");
        std::fs::write(&p, "").unwrap();
        assert!(load_tasks(&p).unwrap().is_empty());
    }
}
