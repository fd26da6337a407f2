//! Shared domain types and their invariant checks.
//!
//! Everything here is plain data: immutable after construction, serializable,
//! and safe to share between worker threads. Invariants are checked by the
//! `validate*` functions, which report violations instead of failing.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::lexer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub description: String,
    pub entry_point: String,
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_code: Option<String>,
    /// Reference solution, only used for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestStub {
    pub task_id: String,
    pub stub_id: usize,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Holistic: stub and assertions produced in one prompt.
    #[serde(rename = "HTG")]
    Htg,
    /// Two-stage, single completion per stub.
    #[serde(rename = "TSTG")]
    Tstg,
    /// Two-stage with self-consistency voting over completions.
    #[serde(rename = "SCTG")]
    Sctg,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Htg => "HTG",
            Strategy::Tstg => "TSTG",
            Strategy::Sctg => "SCTG",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub task_id: String,
    pub stub_id: usize,
    pub sample_index: usize,
    pub source: String,
    pub canonical_key: String,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    Correctness,
    Logic,
    EdgeCase,
    Constraint,
    Robustness,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 5] = [
        QuestionCategory::Correctness,
        QuestionCategory::Logic,
        QuestionCategory::EdgeCase,
        QuestionCategory::Constraint,
        QuestionCategory::Robustness,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            QuestionCategory::Correctness => "correctness",
            QuestionCategory::Logic => "logic",
            QuestionCategory::EdgeCase => "edge_case",
            QuestionCategory::Constraint => "constraint",
            QuestionCategory::Robustness => "robustness",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationQuestion {
    pub category: QuestionCategory,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationAnswer {
    pub text: String,
    /// Defect description following the `ISSUE:` marker, if the answer flags one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoIssues,
    IssuesFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub questions: Vec<VerificationQuestion>,
    pub answers: Vec<VerificationAnswer>,
    pub verdict: Verdict,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Vanilla,
    Cove,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Vanilla => "vanilla",
            Generator::Cove => "cove",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCandidate {
    pub task_id: String,
    pub candidate_index: usize,
    pub source: String,
    pub transcript: Vec<VerificationRecord>,
    pub generator: Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

impl ExecStatus {
    pub fn is_pass(self) -> bool {
        self == ExecStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub covered_lines: BTreeSet<u32>,
    pub wall_ms: u64,
    pub diagnostic: String,
}

impl ExecutionOutcome {
    pub fn with_status(status: ExecStatus) -> Self {
        ExecutionOutcome { status, covered_lines: BTreeSet::new(), wall_ms: 0, diagnostic: String::new() }
    }

    pub fn passed(&self) -> bool {
        self.status.is_pass()
    }
}

/// Z x M grid of outcomes. Rows follow `candidates`, columns follow `tests`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionMatrix {
    pub task_id: String,
    /// `candidate_index` of each row.
    pub candidates: Vec<usize>,
    /// `stub_id` of each column.
    pub tests: Vec<usize>,
    pub cells: Vec<Vec<ExecutionOutcome>>,
}

impl ExecutionMatrix {
    pub fn rows(&self) -> usize {
        self.candidates.len()
    }

    pub fn cols(&self) -> usize {
        self.tests.len()
    }

    /// Row reduced to pass / not-pass.
    pub fn pass_row(&self, row: usize) -> Vec<bool> {
        self.cells[row].iter().map(ExecutionOutcome::passed).collect()
    }
}

/// Candidates (by matrix row) that pass exactly the same subset of tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSet {
    pub pass_vector: Vec<bool>,
    /// Matrix row positions, ascending.
    pub members: Vec<usize>,
    pub score: f64,
}

impl AgreementSet {
    pub fn popcount(&self) -> usize {
        self.pass_vector.iter().filter(|&&p| p).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Invalid,
}

impl Validity {
    pub fn from_pass(passed: bool) -> Self {
        if passed {
            Validity::Valid
        } else {
            Validity::Invalid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestLabel {
    /// `stub_id` of the labeled test.
    pub test: usize,
    pub predicted: Validity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<Validity>,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.to_string().contains(needle))
    }

    fn check(&mut self, ok: bool, invariant: &str, detail: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(Violation { invariant: invariant.to_string(), detail: detail() });
        }
    }

    fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_task(task: &Task) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(!task.task_id.trim().is_empty(), "task_id", || "task_id is empty".into());
    r.check(!task.entry_point.trim().is_empty(), "entry_point", || "entry_point is empty".into());
    if let Some(gt) = &task.ground_truth {
        let mentioned = lexer::code_tokens(gt)
            .map(|toks| lexer::mentions_identifier(&toks, &task.entry_point))
            .unwrap_or_else(|_| gt.contains(task.entry_point.as_str()));
        r.check(mentioned, "entry_point in ground_truth", || {
            format!("ground_truth never mentions {:?}", task.entry_point)
        });
    }
    r
}

pub fn validate_task_set(tasks: &[Task]) -> ValidationReport {
    let mut r = ValidationReport::default();
    let mut seen = HashSet::new();
    for t in tasks {
        r.extend(validate_task(t));
        r.check(seen.insert(t.task_id.as_str()), "unique task_id", || {
            format!("duplicate task_id {:?}", t.task_id)
        });
    }
    r
}

pub fn validate_stub(stub: &TestStub, task: &Task) -> ValidationReport {
    let mut r = ValidationReport::default();
    match lexer::code_tokens(&stub.source) {
        Ok(toks) => {
            r.check(lexer::contains_call(&toks, &task.entry_point), "stub calls entry_point", || {
                format!("no call to {}", task.entry_point)
            });
            r.check(!lexer::contains_assertion(&toks), "stub has no assertion", || {
                "stub contains an assertion".into()
            });
        }
        Err(e) => r.check(false, "stub lexes", || e.to_string()),
    }
    r
}

pub fn validate_test_case(test: &TestCase, task: &Task) -> ValidationReport {
    let mut r = ValidationReport::default();
    match lexer::code_tokens(&test.source) {
        Ok(toks) => r.check(lexer::contains_assertion(&toks), "test has assertion", || {
            "test contains no assertion".into()
        }),
        Err(e) => r.check(false, "test lexes", || e.to_string()),
    }
    let key = canon::canonicalize(&test.source, &task.entry_point);
    r.check(
        key.as_deref().ok() == Some(test.canonical_key.as_str()),
        "canonical_key",
        || "canonical_key is not the canonical digest of source".into(),
    );
    r
}

pub fn validate_record(rec: &VerificationRecord) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(rec.answers.len() == rec.questions.len(), "answers aligned", || {
        format!("{} answers for {} questions", rec.answers.len(), rec.questions.len())
    });
    if rec.verdict == Verdict::IssuesFound {
        let flagged = rec
            .answers
            .iter()
            .any(|a| a.defect.as_deref().is_some_and(|d| !d.is_empty()));
        r.check(flagged, "issues_found has defect", || {
            "verdict issues_found but no answer flags a defect".into()
        });
    }
    r
}

pub fn validate_candidate(c: &CodeCandidate, task: &Task) -> ValidationReport {
    let mut r = ValidationReport::default();
    let defines = lexer::code_tokens(&c.source)
        .map(|t| lexer::defines_function(&t, &task.entry_point))
        .unwrap_or(false);
    r.check(defines, "candidate defines entry_point", || {
        format!("source does not define {}", task.entry_point)
    });
    r.check(
        c.generator != Generator::Vanilla || c.transcript.is_empty(),
        "vanilla transcript empty",
        || "vanilla candidate carries a verification transcript".into(),
    );
    for rec in &c.transcript {
        r.extend(validate_record(rec));
    }
    for (i, rec) in c.transcript.iter().enumerate() {
        r.check(rec.iteration == i, "transcript iterations", || {
            format!("round {i} has iteration {}", rec.iteration)
        });
        if i + 1 < c.transcript.len() {
            r.check(rec.verdict == Verdict::IssuesFound, "transcript verdicts", || {
                format!("non-final round {i} reports no_issues")
            });
        }
    }
    r
}

/// Number of lines in a source text, the denominator domain for covered lines.
pub fn line_count(source: &str) -> u32 {
    source.lines().count() as u32
}

pub fn validate_outcome(o: &ExecutionOutcome, solution: &str) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(o.status != ExecStatus::Pass || o.diagnostic.is_empty(), "pass has no diagnostic", || {
        "pass outcome carries a diagnostic".into()
    });
    let n = line_count(solution);
    r.check(o.covered_lines.iter().all(|&l| l >= 1 && l <= n), "covered_lines in range", || {
        format!("covered lines outside [1, {n}]")
    });
    r
}

pub fn validate_matrix(m: &ExecutionMatrix) -> ValidationReport {
    let mut r = ValidationReport::default();
    let z = m.candidates.len();
    let cols = m.tests.len();
    let dims_ok = m.cells.len() == z && m.cells.iter().all(|row| row.len() == cols);
    r.check(dims_ok, "grid dimensions", || {
        let shape: Vec<usize> = m.cells.iter().map(Vec::len).collect();
        format!("expected {z}x{cols}, got rows {shape:?}")
    });
    r
}

/// Checks one agreement set against the matrix it came from.
pub fn validate_agreement_set(set: &AgreementSet, m: &ExecutionMatrix) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(!set.members.is_empty(), "members non-empty", || "agreement set is empty".into());
    r.check(set.score >= 0.0, "score non-negative", || format!("score {}", set.score));
    for &row in &set.members {
        let ok = row < m.rows() && m.cells[row].len() == set.pass_vector.len() && m.pass_row(row) == set.pass_vector;
        r.check(ok, "member row equals pass_vector", || format!("row {row} disagrees"));
    }
    let expected = set.popcount() as f64 * (set.members.len() as f64).sqrt();
    r.check((set.score - expected).abs() <= 1e-9, "score", || {
        format!("score mismatch: got {}, expected {expected:.1}", set.score)
    });
    r
}

/// Checks that a list of agreement sets partitions the candidate rows.
pub fn validate_partition(sets: &[AgreementSet], m: &ExecutionMatrix) -> ValidationReport {
    let mut r = validate_matrix(m);
    let mut seen = vec![0usize; m.rows()];
    for s in sets {
        r.extend(validate_agreement_set(s, m));
        for &row in &s.members {
            if row < seen.len() {
                seen[row] += 1;
            }
        }
    }
    if m.cols() > 0 {
        r.check(seen.iter().all(|&n| n == 1), "partition", || {
            format!("row membership counts {seen:?}")
        });
    }
    r
}

pub fn validate_labels(
    labels: &[TestLabel],
    best_row: usize,
    m: &ExecutionMatrix,
    ground_truth: Option<&[ExecutionOutcome]>,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(labels.len() == m.cols(), "one label per test", || {
        format!("{} labels for {} tests", labels.len(), m.cols())
    });
    for (j, l) in labels.iter().enumerate() {
        if let Some(cell) = m.cells.get(best_row).and_then(|row| row.get(j)) {
            r.check(l.predicted == Validity::from_pass(cell.passed()), "predicted", || {
                format!("test {} predicted {:?}", l.test, l.predicted)
            });
        }
        match (ground_truth.and_then(|g| g.get(j)), l.actual) {
            (Some(o), Some(a)) => r.check(a == Validity::from_pass(o.passed()), "actual", || {
                format!("test {} actual {a:?}", l.test)
            }),
            (None, None) => {}
            (Some(_), None) => r.check(false, "actual", || format!("test {} missing actual", l.test)),
            (None, Some(_)) => r.check(false, "actual", || format!("test {} has actual without ground truth", l.test)),
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> Task {
        Task {
            task_id: "add".into(),
            description: "Add two numbers.".into(),
            entry_point: "add".into(),
            signature: "def add(a, b):".into(),
            setup_code: None,
            ground_truth: Some("def add(a, b):\n    return a + b\n".into()),
        }
    }

    fn outcome(status: ExecStatus) -> ExecutionOutcome {
        ExecutionOutcome::with_status(status)
    }

    #[test]
    fn well_formed_task_is_valid() {
        assert!(validate_task(&task()).is_ok());
    }

    #[test]
    fn ground_truth_must_mention_entry_point() {
        let mut t = task();
        t.ground_truth = Some("def plus(a, b):\n    return a + b\n".into());
        assert!(validate_task(&t).mentions("entry_point in ground_truth"));
    }

    #[test]
    fn duplicate_task_ids_are_reported() {
        let r = validate_task_set(&[task(), task()]);
        assert!(r.mentions("duplicate task_id"));
    }

    #[test]
    fn missing_cell_names_grid_dimensions() {
        let m = ExecutionMatrix {
            task_id: "add".into(),
            candidates: vec![0, 1],
            tests: vec![0, 1],
            cells: vec![
                vec![outcome(ExecStatus::Pass), outcome(ExecStatus::Fail)],
                vec![outcome(ExecStatus::Pass)],
            ],
        };
        let r = validate_matrix(&m);
        assert!(r.mentions("grid dimensions"), "{r}");
    }

    #[test]
    fn wrong_score_reports_expected_value() {
        let m = ExecutionMatrix {
            task_id: "t".into(),
            candidates: vec![0],
            tests: vec![0, 1, 2, 3],
            cells: vec![vec![outcome(ExecStatus::Pass); 4]],
        };
        let set = AgreementSet { pass_vector: vec![true; 4], members: vec![0], score: 5.0 };
        let r = validate_agreement_set(&set, &m);
        assert!(r.mentions("score mismatch"), "{r}");
        assert!(r.mentions("expected 4.0"), "{r}");
    }

    #[test]
    fn stub_invariants() {
        let t = task();
        let good = TestStub { task_id: "add".into(), stub_id: 0, source: "def test_a():\n    r = add(1, 2)\n".into() };
        assert!(validate_stub(&good, &t).is_ok());
        let asserting = TestStub { source: "def test_a():\n    assert add(1, 2) == 3\n".into(), ..good.clone() };
        assert!(validate_stub(&asserting, &t).mentions("no assertion"));
        let no_call = TestStub { source: "def test_a():\n    r = 3\n".into(), ..good };
        assert!(validate_stub(&no_call, &t).mentions("calls entry_point"));
    }

    #[test]
    fn issues_found_requires_a_defect() {
        let rec = VerificationRecord {
            questions: vec![VerificationQuestion { category: QuestionCategory::Logic, text: "q".into() }],
            answers: vec![VerificationAnswer { text: "fine".into(), defect: None }],
            verdict: Verdict::IssuesFound,
            iteration: 0,
        };
        assert!(validate_record(&rec).mentions("issues_found has defect"));
    }

    #[test]
    fn vanilla_candidate_with_transcript_is_invalid() {
        let rec = VerificationRecord { questions: vec![], answers: vec![], verdict: Verdict::NoIssues, iteration: 0 };
        let c = CodeCandidate {
            task_id: "add".into(),
            candidate_index: 0,
            source: "def add(a, b):\n    return a + b\n".into(),
            transcript: vec![rec],
            generator: Generator::Vanilla,
        };
        assert!(validate_candidate(&c, &task()).mentions("vanilla transcript empty"));
    }

    #[test]
    fn outcome_lines_must_be_in_range() {
        let mut o = outcome(ExecStatus::Pass);
        o.covered_lines = [1, 3].into_iter().collect();
        assert!(validate_outcome(&o, "def f():\n    return 1\n").mentions("covered_lines"));
        o.diagnostic = "boom".into();
        assert!(validate_outcome(&o, "x\ny\nz\n").mentions("pass has no diagnostic"));
    }

    #[test]
    fn labels_follow_best_row() {
        let m = ExecutionMatrix {
            task_id: "t".into(),
            candidates: vec![0],
            tests: vec![0, 1],
            cells: vec![vec![outcome(ExecStatus::Pass), outcome(ExecStatus::Timeout)]],
        };
        let labels = vec![
            TestLabel { test: 0, predicted: Validity::Valid, actual: None },
            TestLabel { test: 1, predicted: Validity::Valid, actual: None },
        ];
        assert!(validate_labels(&labels, 0, &m, None).mentions("predicted"));
    }
}
