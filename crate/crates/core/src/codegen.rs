//! Candidate solutions: single-shot (vanilla) generation and the
//! chain-of-verification (CoVe) refinement loop.

use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer;
use crate::model::{
    CodeCandidate, Generator, QuestionCategory, Task, Verdict, VerificationAnswer, VerificationQuestion,
    VerificationRecord,
};
use crate::provider::{extract_code_block, GenContext, TemplateId, Vars};

pub const ISSUE_MARKER: &str = "ISSUE:";
pub const UNANSWERED: &str = "unanswered";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveConfig {
    pub max_rounds: usize,
    /// Ask each verification question in its own request.
    pub per_question: bool,
}

impl Default for CoveConfig {
    fn default() -> Self {
        CoveConfig { max_rounds: 3, per_question: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateOutcome {
    Kept(CodeCandidate),
    Discarded { candidate_index: usize, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub candidates: Vec<CodeCandidate>,
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

fn defines_entry_point(source: &str, task: &Task) -> bool {
    lexer::code_tokens(source).is_ok_and(|t| lexer::defines_function(&t, &task.entry_point))
}

/// Requests code from `template`, retrying once when the reply does not
/// define the entry point. Returns `None` when both attempts miss it.
fn request_code(
    ctx: &GenContext<'_>,
    task: &Task,
    template: TemplateId,
    vars: &Vars<'_>,
    sample_index: usize,
) -> Result<Option<String>> {
    for attempt in 0..2 {
        let source = extract_code_block(&ctx.generate(template, vars, sample_index, attempt)?);
        if defines_entry_point(&source, task) {
            return Ok(Some(source));
        }
    }
    Ok(None)
}

pub fn generate_vanilla(ctx: &GenContext<'_>, task: &Task, candidate_index: usize) -> Result<CandidateOutcome> {
    match request_code(ctx, task, TemplateId::BaselineCode, &task_vars(task), candidate_index)? {
        Some(source) => Ok(CandidateOutcome::Kept(CodeCandidate {
            task_id: task.task_id.clone(),
            candidate_index,
            source,
            transcript: Vec::new(),
            generator: Generator::Vanilla,
        })),
        None => Ok(CandidateOutcome::Discarded {
            candidate_index,
            reason: format!("reply does not define {} after one retry", task.entry_point),
        }),
    }
}

fn plan_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^\s*(?:(?:\d+|Q\d+)\s*[.):]\s*|[-*]\s*)?\[\s*(correctness|logic|edge[ _-]?case|constraint|robustness)\s*\]\s*(.+?)\s*$")
            .expect("static regex")
    })
}

fn answer_head_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*A(\d+)\s*[:.)]").expect("static regex"))
}

/// Parses `[category] question` lines.
pub fn parse_plan(text: &str) -> Vec<VerificationQuestion> {
    plan_line_re()
        .captures_iter(text)
        .filter_map(|c| {
            let tag = c[1].to_ascii_lowercase().replace([' ', '-'], "_").replace("edgecase", "edge_case");
            QuestionCategory::from_tag(&tag).map(|category| VerificationQuestion { category, text: c[2].to_string() })
        })
        .collect()
}

pub fn fallback_question(category: QuestionCategory) -> VerificationQuestion {
    let text = match category {
        QuestionCategory::Correctness => "Does the function return the output the description requires for typical valid inputs?",
        QuestionCategory::Logic => "Is the algorithm logically sound and complete for every case the description covers?",
        QuestionCategory::EdgeCase => "What does the function do on boundary inputs such as empty collections, zero, or None?",
        QuestionCategory::Constraint => "Does the function respect every explicit and implicit constraint stated in the description?",
        QuestionCategory::Robustness => "How does the function behave when given invalid or unexpected inputs?",
    };
    VerificationQuestion { category, text: text.to_string() }
}

fn missing_categories(questions: &[VerificationQuestion]) -> Vec<QuestionCategory> {
    QuestionCategory::ALL
        .into_iter()
        .filter(|c| !questions.iter().any(|q| q.category == *c))
        .collect()
}

/// Asks for a verification plan covering all five categories. One
/// regeneration is requested if a category is missing; whatever is still
/// missing afterwards is filled from the fallback bank.
pub fn build_verification_plan(
    ctx: &GenContext<'_>,
    task: &Task,
    baseline: &str,
    sample_index: usize,
) -> Result<Vec<VerificationQuestion>> {
    if baseline.trim().is_empty() {
        return Err(Error::Precondition("baseline source is empty".into()));
    }
    let vars = Vars { baseline, ..task_vars(task) };
    let mut questions = parse_plan(&ctx.generate(TemplateId::VerifyPlan, &vars, sample_index, 0)?);
    if !missing_categories(&questions).is_empty() {
        questions = parse_plan(&ctx.generate(TemplateId::VerifyPlan, &vars, sample_index, 1)?);
        for c in missing_categories(&questions) {
            questions.push(fallback_question(c));
        }
    }
    Ok(questions)
}

pub fn render_questions(questions: &[VerificationQuestion]) -> String {
    questions
        .iter()
        .enumerate()
        .map(|(i, q)| format!("Q{}. [{}] {}", i + 1, q.category.tag(), q.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_answers(answers: &[VerificationAnswer]) -> String {
    answers
        .iter()
        .enumerate()
        .map(|(i, a)| format!("A{}: {}", i + 1, a.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn answer_from_text(text: &str) -> VerificationAnswer {
    let text = text.trim().to_string();
    let defect = text.find(ISSUE_MARKER).map(|at| {
        let rest = text[at + ISSUE_MARKER.len()..].lines().next().unwrap_or("").trim();
        if rest.is_empty() {
            "unspecified defect".to_string()
        } else {
            rest.to_string()
        }
    });
    VerificationAnswer { text, defect }
}

/// Splits a reply into `A<k>:` answers. Returns `None` unless the answers
/// are numbered exactly 1..=n.
pub fn parse_answers(text: &str) -> Option<Vec<VerificationAnswer>> {
    let heads: Vec<(usize, usize, usize)> = answer_head_re()
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((c[1].parse().ok()?, m.start(), m.end()))
        })
        .collect();
    if heads.iter().enumerate().any(|(i, (k, _, _))| *k != i + 1) {
        return None;
    }
    Some(
        heads
            .iter()
            .enumerate()
            .map(|(i, &(_, _, body_start))| {
                let end = heads.get(i + 1).map_or(text.len(), |h| h.1);
                answer_from_text(&text[body_start..end])
            })
            .collect(),
    )
}

fn verdict_of(answers: &[VerificationAnswer]) -> Verdict {
    if answers.iter().any(|a| a.defect.is_some()) {
        Verdict::IssuesFound
    } else {
        Verdict::NoIssues
    }
}

/// Answers the plan and derives the verdict from `ISSUE:` markers.
///
/// A reply whose answer count does not match is re-asked once; if it still
/// does not match, missing answers are padded as unanswered defects and the
/// verdict is forced to `issues_found`.
pub fn answer_questions(
    ctx: &GenContext<'_>,
    task: &Task,
    baseline: &str,
    questions: &[VerificationQuestion],
    iteration: usize,
    sample_index: usize,
    per_question: bool,
) -> Result<VerificationRecord> {
    if questions.is_empty() {
        return Err(Error::Precondition("verification plan has no questions".into()));
    }
    let answers = if per_question {
        let mut out = Vec::with_capacity(questions.len());
        for q in questions {
            let rendered = render_questions(std::slice::from_ref(q));
            let vars = Vars { baseline, questions: &rendered, ..task_vars(task) };
            let text = ctx.generate(TemplateId::VerifyAnswer, &vars, sample_index, 0)?;
            let answer = match parse_answers(&text) {
                Some(mut a) if a.len() == 1 => a.remove(0),
                _ => answer_from_text(&text),
            };
            out.push(answer);
        }
        out
    } else {
        let rendered = render_questions(questions);
        let vars = Vars { baseline, questions: &rendered, ..task_vars(task) };
        let n = questions.len();
        let first = parse_answers(&ctx.generate(TemplateId::VerifyAnswer, &vars, sample_index, 0)?);
        match first {
            Some(a) if a.len() == n => a,
            _ => match parse_answers(&ctx.generate(TemplateId::VerifyAnswer, &vars, sample_index, 1)?) {
                Some(a) if a.len() == n => a,
                other => {
                    let mut a = other.unwrap_or_default();
                    a.truncate(n);
                    while a.len() < n {
                        a.push(VerificationAnswer { text: UNANSWERED.into(), defect: Some(UNANSWERED.into()) });
                    }
                    return Ok(VerificationRecord {
                        questions: questions.to_vec(),
                        answers: a,
                        verdict: Verdict::IssuesFound,
                        iteration,
                    });
                }
            },
        }
    };
    let verdict = verdict_of(&answers);
    Ok(VerificationRecord { questions: questions.to_vec(), answers, verdict, iteration })
}

/// Baseline, then up to `max_rounds` rounds of plan, answers and, when issues
/// are found, verification-guided regeneration.
pub fn generate_cove(ctx: &GenContext<'_>, task: &Task, cfg: CoveConfig, candidate_index: usize) -> Result<CandidateOutcome> {
    if cfg.max_rounds == 0 {
        return Err(Error::Precondition("max_rounds must be at least 1".into()));
    }
    let Some(mut source) = request_code(ctx, task, TemplateId::BaselineCode, &task_vars(task), candidate_index)? else {
        return Ok(CandidateOutcome::Discarded {
            candidate_index,
            reason: format!("baseline does not define {} after one retry", task.entry_point),
        });
    };
    let mut transcript = Vec::new();
    for round in 0..cfg.max_rounds {
        let questions = build_verification_plan(ctx, task, &source, candidate_index)?;
        let record = answer_questions(ctx, task, &source, &questions, round, candidate_index, cfg.per_question)?;
        let verdict = record.verdict;
        transcript.push(record);
        if verdict == Verdict::NoIssues {
            break;
        }
        let last = transcript.last().expect("just pushed");
        let rendered_q = render_questions(&last.questions);
        let rendered_a = render_answers(&last.answers);
        let vars = Vars { baseline: &source, questions: &rendered_q, answers: &rendered_a, ..task_vars(task) };
        match request_code(ctx, task, TemplateId::GuidedRegen, &vars, candidate_index)? {
            Some(revised) => source = revised,
            None => log::warn!(
                "{}: candidate {candidate_index} round {round} regeneration lacks {}; keeping previous source",
                task.task_id,
                task.entry_point
            ),
        }
    }
    Ok(CandidateOutcome::Kept(CodeCandidate {
        task_id: task.task_id.clone(),
        candidate_index,
        source,
        transcript,
        generator: Generator::Cove,
    }))
}

/// `z` independent candidates with distinct sample indices.
pub fn generate_candidates(
    ctx: &GenContext<'_>,
    task: &Task,
    z: usize,
    generator: Generator,
    cove: CoveConfig,
) -> Result<CandidateBatch> {
    if z == 0 {
        return Err(Error::Precondition("Z must be at least 1".into()));
    }
    let outcomes: Vec<Result<CandidateOutcome>> = (0..z)
        .into_par_iter()
        .map(|k| match generator {
            Generator::Vanilla => generate_vanilla(ctx, task, k),
            Generator::Cove => generate_cove(ctx, task, cove, k),
        })
        .collect();
    let mut batch = CandidateBatch::default();
    for o in outcomes {
        match o? {
            CandidateOutcome::Kept(c) => batch.candidates.push(c),
            CandidateOutcome::Discarded { candidate_index, reason } => {
                batch.diagnostics.push(format!("{}: candidate {candidate_index} discarded: {reason}", task.task_id))
            }
        }
    }
    Ok(batch)
}
