//! Test synthesis: holistic (HTG), two-stage (TSTG) and two-stage with
//! self-consistency voting (SCTG).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::lexer;
use crate::model::{Strategy, Task, TestCase, TestStub};
use crate::provider::{extract_code_block, GenContext, TemplateId, Vars};

/// Regenerations allowed for a malformed stub before it is dropped.
pub const STUB_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionGroup {
    pub canonical_key: String,
    /// `(sample_index, test)` pairs, ascending by sample index.
    pub members: Vec<(usize, TestCase)>,
    pub frequency: usize,
}

impl CompletionGroup {
    pub fn first_sample(&self) -> usize {
        self.members.first().map_or(usize::MAX, |(s, _)| *s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubBatch {
    pub stubs: Vec<TestStub>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubCompletion {
    pub winner: Option<TestCase>,
    pub groups: Vec<CompletionGroup>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suite {
    pub tests: Vec<TestCase>,
    pub stubs_requested: usize,
    pub stubs_kept: usize,
    pub diagnostics: Vec<String>,
}

fn task_vars(task: &Task) -> Vars<'_> {
    Vars {
        description: &task.description,
        signature: &task.signature,
        entry_point: &task.entry_point,
        ..Default::default()
    }
}

/// Why a stub is rejected, if it is.
fn stub_problem(source: &str, task: &Task) -> Option<String> {
    match lexer::code_tokens(source) {
        Err(e) => Some(format!("does not lex ({e})")),
        Ok(toks) if !lexer::contains_call(&toks, &task.entry_point) => {
            Some(format!("never calls {}", task.entry_point))
        }
        Ok(toks) if lexer::contains_assertion(&toks) => Some("contains an assertion".into()),
        Ok(_) => None,
    }
}

/// Builds a [`TestCase`] from a completed test source, or explains why the
/// source cannot be one.
pub fn make_test_case(
    task: &Task,
    stub_id: usize,
    sample_index: usize,
    source: String,
    strategy: Strategy,
) -> std::result::Result<TestCase, String> {
    let toks = lexer::code_tokens(&source).map_err(|e| format!("unparseable ({e})"))?;
    if !lexer::contains_assertion(&toks) {
        return Err("no assertion".into());
    }
    let canonical_key = canon::canonicalize(&source, &task.entry_point).map_err(|e| format!("unparseable ({e})"))?;
    Ok(TestCase { task_id: task.task_id.clone(), stub_id, sample_index, source, canonical_key, strategy })
}

/// Asks for `m` stubs, one request each. A malformed stub is regenerated up
/// to [`STUB_RETRIES`] times and then dropped.
pub fn generate_stubs(ctx: &GenContext<'_>, task: &Task, m: usize) -> Result<StubBatch> {
    if m == 0 {
        return Err(Error::Precondition("M must be at least 1".into()));
    }
    let vars = task_vars(task);
    let results: Vec<Result<(usize, std::result::Result<String, String>)>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut last_problem = String::new();
            for attempt in 0..=STUB_RETRIES {
                let text = ctx.generate(TemplateId::StubGen, &vars, j, attempt)?;
                let source = extract_code_block(&text);
                match stub_problem(&source, task) {
                    None => return Ok((j, Ok(source))),
                    Some(p) => last_problem = p,
                }
            }
            Ok((j, Err(last_problem)))
        })
        .collect();

    let mut batch = StubBatch::default();
    for r in results {
        let (j, outcome) = r?;
        match outcome {
            Ok(source) => batch.stubs.push(TestStub { task_id: task.task_id.clone(), stub_id: j, source }),
            Err(problem) => batch.diagnostics.push(format!(
                "{}: stub {j} dropped after {} retries: {problem}",
                task.task_id, STUB_RETRIES
            )),
        }
    }
    if batch.stubs.len() < m {
        batch.diagnostics.push(format!("{}: kept {} of {m} stubs", task.task_id, batch.stubs.len()));
    }
    Ok(batch)
}

/// Majority vote over parsed completions of one stub.
///
/// Groups by canonical key. The winning group has the highest frequency, ties
/// going to the group whose earliest sample index is smallest; the winner is
/// that group's earliest member. Groups are returned ordered by earliest
/// sample index. Returns `None` for an empty input.
pub fn vote(completions: &[TestCase]) -> Option<(TestCase, Vec<CompletionGroup>)> {
    let mut sorted: Vec<&TestCase> = completions.iter().collect();
    sorted.sort_by_key(|t| t.sample_index);

    let mut groups: Vec<CompletionGroup> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for t in sorted {
        let g = *index.entry(t.canonical_key.as_str()).or_insert_with(|| {
            groups.push(CompletionGroup { canonical_key: t.canonical_key.clone(), members: Vec::new(), frequency: 0 });
            groups.len() - 1
        });
        groups[g].members.push((t.sample_index, t.clone()));
        groups[g].frequency += 1;
    }
    let best = groups
        .iter()
        .min_by(|a, b| b.frequency.cmp(&a.frequency).then(a.first_sample().cmp(&b.first_sample())))?;
    let winner = best.members[0].1.clone();
    Some((winner, groups))
}

/// Samples `n` completions of `stub` and keeps the majority one.
pub fn complete_stub_sc(
    ctx: &GenContext<'_>,
    task: &Task,
    stub: &TestStub,
    n: usize,
    strategy: Strategy,
) -> Result<StubCompletion> {
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let vars = Vars { stub: &stub.source, ..task_vars(task) };
    let texts: Vec<Result<(usize, String)>> = (0..n)
        .into_par_iter()
        .map(|k| Ok((k, ctx.generate(TemplateId::StubComplete, &vars, k, 0)?)))
        .collect();

    let mut parsed = Vec::with_capacity(n);
    let mut diagnostics = Vec::new();
    for r in texts {
        let (k, text) = r?;
        match make_test_case(task, stub.stub_id, k, extract_code_block(&text), strategy) {
            Ok(tc) => parsed.push(tc),
            Err(why) => diagnostics.push(format!(
                "{}: stub {} sample {k} excluded from voting: {why}",
                task.task_id, stub.stub_id
            )),
        }
    }
    match vote(&parsed) {
        Some((winner, groups)) => Ok(StubCompletion { winner: Some(winner), groups, diagnostics }),
        None => {
            diagnostics.push(format!(
                "{}: stub {} yields no test: all {n} completions unparseable",
                task.task_id, stub.stub_id
            ));
            Ok(StubCompletion { winner: None, groups: Vec::new(), diagnostics })
        }
    }
}

/// Splits a test file into its top-level `def test...` functions. Lines before
/// the first test (imports, helpers) are prepended to every piece; decorators
/// directly above a test travel with it.
pub fn split_test_functions(source: &str) -> Vec<String> {
    let lines: Vec<&str> = source.lines().collect();
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.starts_with("def test") || l.starts_with("async def test"))
        .map(|(i, _)| {
            let mut s = i;
            while s > 0 && lines[s - 1].starts_with('@') {
                s -= 1;
            }
            s
        })
        .collect();
    let Some(&first) = starts.first() else {
        return Vec::new();
    };
    let preamble = lines[..first].join("\n");
    let preamble = preamble.trim();
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let end = starts.get(k + 1).copied().unwrap_or(lines.len());
            let body = lines[s..end].join("\n");
            let body = body.trim_end();
            if preamble.is_empty() {
                format!("{body}\n")
            } else {
                format!("{preamble}\n\n{body}\n")
            }
        })
        .collect()
}

fn holistic(ctx: &GenContext<'_>, task: &Task, m: usize) -> Result<Suite> {
    let vars = Vars { count: Some(m), ..task_vars(task) };
    let text = ctx.generate(TemplateId::HolisticTest, &vars, 0, 0)?;
    let pieces = split_test_functions(&extract_code_block(&text));
    let mut suite = Suite { stubs_requested: m, ..Default::default() };
    if pieces.len() > m {
        suite.diagnostics.push(format!("{}: holistic reply had {} tests, keeping the first {m}", task.task_id, pieces.len()));
    }
    for (i, piece) in pieces.into_iter().take(m).enumerate() {
        match make_test_case(task, i, 0, piece, Strategy::Htg) {
            Ok(tc) => suite.tests.push(tc),
            Err(why) => suite.diagnostics.push(format!("{}: holistic test {i} dropped: {why}", task.task_id)),
        }
    }
    suite.stubs_kept = suite.tests.len();
    Ok(suite)
}

fn two_stage(ctx: &GenContext<'_>, task: &Task, m: usize, n: usize, strategy: Strategy) -> Result<Suite> {
    let batch = generate_stubs(ctx, task, m)?;
    let completions: Vec<Result<StubCompletion>> =
        batch.stubs.par_iter().map(|stub| complete_stub_sc(ctx, task, stub, n, strategy)).collect();
    let mut suite = Suite { stubs_requested: m, stubs_kept: batch.stubs.len(), diagnostics: batch.diagnostics, ..Default::default() };
    for c in completions {
        let c = c?;
        suite.diagnostics.extend(c.diagnostics);
        suite.tests.extend(c.winner);
    }
    Ok(suite)
}

/// Produces the test suite for one task under the given strategy.
pub fn synthesize_suite(ctx: &GenContext<'_>, task: &Task, strategy: Strategy, m: usize, n: usize) -> Result<Suite> {
    if m == 0 {
        return Err(Error::Precondition("M must be at least 1".into()));
    }
    let mut suite = match strategy {
        Strategy::Htg => holistic(ctx, task, m)?,
        Strategy::Tstg => two_stage(ctx, task, m, 1, Strategy::Tstg)?,
        Strategy::Sctg => {
            if n < 2 {
                return Err(Error::Precondition("SCTG requires N >= 2".into()));
            }
            two_stage(ctx, task, m, n, Strategy::Sctg)?
        }
    };
    if suite.tests.is_empty() {
        suite.diagnostics.push(format!("{}: no usable tests", task.task_id));
    }
    Ok(suite)
}
