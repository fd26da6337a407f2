mod common;

use common::{fenced, task, with_mock};
use convertest_core::codegen::{
    answer_questions, build_verification_plan, generate_candidates, generate_cove, generate_vanilla, parse_answers,
    CandidateOutcome, CoveConfig,
};
use convertest_core::model::{validate_candidate, Generator, QuestionCategory, Verdict};
use convertest_core::provider::{Counting, GenContext, MockProvider, MockRule, MockScript, PromptSet, Sampling, TemplateId};

const PLAN: &str = "[correctness] Q?\n[logic] Q?\n[edge_case] Q?\n[constraint] Q?\n[robustness] Q?";
const CLEAN: &str = "A1: fine\nA2: fine\nA3: fine\nA4: fine\nA5: fine";
const FLAGGED: &str = "A1: fine\nA2: ISSUE: off by one\nA3: fine\nA4: fine\nA5: fine";

fn version(k: usize) -> String {
    fenced(&format!("def f(x):\n    # v{k}\n    return x + {k}"))
}

/// Baseline is v0; answers flag every version listed in `bad`; regeneration of
/// v_k yields v_{k+1}.
fn script(bad: &[usize]) -> MockScript {
    let mut s = MockScript::default();
    s.push(MockRule::new(TemplateId::BaselineCode, vec![version(0)]));
    s.push(MockRule::new(TemplateId::VerifyPlan, vec![PLAN.into()]));
    for &k in bad {
        s.push(MockRule::new(TemplateId::VerifyAnswer, vec![FLAGGED.into()]).containing(format!("# v{k}\n")));
        s.push(MockRule::new(TemplateId::GuidedRegen, vec![version(k + 1)]).containing(format!("# v{k}\n")));
    }
    s.push(MockRule::new(TemplateId::VerifyAnswer, vec![CLEAN.into()]));
    s
}

fn cove(ctx: &GenContext<'_>, max_rounds: usize) -> convertest_core::model::CodeCandidate {
    match generate_cove(ctx, &task("t", "f"), CoveConfig { max_rounds, per_question: false }, 0).unwrap() {
        CandidateOutcome::Kept(c) => c,
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn no_issues_stops_after_one_round() {
    with_mock(script(&[]), |ctx| {
        let c = cove(ctx, 3);
        assert_eq!(c.transcript.len(), 1);
        assert_eq!(c.transcript[0].verdict, Verdict::NoIssues);
        assert!(c.source.contains("# v0"));
        assert_eq!(c.generator, Generator::Cove);
        let CandidateOutcome::Kept(v) = generate_vanilla(ctx, &task("t", "f"), 0).unwrap() else { panic!() };
        assert_eq!(v.source, c.source);
        assert!(v.transcript.is_empty());
    });
}

#[test]
fn one_fix_gives_two_rounds() {
    with_mock(script(&[0]), |ctx| {
        let c = cove(ctx, 3);
        assert_eq!(c.transcript.len(), 2);
        assert_eq!(c.transcript[0].verdict, Verdict::IssuesFound);
        assert_eq!(c.transcript[0].answers[1].defect.as_deref(), Some("off by one"));
        assert_eq!(c.transcript[1].verdict, Verdict::NoIssues);
        assert!(c.source.contains("# v1"));
        assert!(validate_candidate(&c, &task("t", "f")).is_ok());
    });
}

#[test]
fn persistent_issues_stop_at_max_rounds() {
    with_mock(script(&[0, 1, 2, 3, 4]), |ctx| {
        let c = cove(ctx, 3);
        assert_eq!(c.transcript.len(), 3);
        assert!(c.transcript.iter().all(|r| r.verdict == Verdict::IssuesFound));
        assert_eq!(c.transcript.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(c.source.contains("# v3"), "last regeneration is returned");
        assert!(validate_candidate(&c, &task("t", "f")).is_ok());
    });
}

#[test]
fn zero_rounds_is_a_precondition_error() {
    with_mock(script(&[]), |ctx| {
        assert!(generate_cove(ctx, &task("t", "f"), CoveConfig { max_rounds: 0, per_question: false }, 0).is_err());
    });
}

#[test]
fn regeneration_without_entry_point_keeps_previous_source() {
    let mut s = script(&[0]);
    s.prepend(MockRule::new(TemplateId::GuidedRegen, vec![fenced("def g(x):\n    return x")]));
    with_mock(s, |ctx| {
        let c = cove(ctx, 2);
        assert_eq!(c.transcript.len(), 2);
        assert!(c.source.contains("# v0"));
    });
}

#[test]
fn discarded_candidate_shrinks_the_batch() {
    let mut s = script(&[]);
    s.prepend(MockRule::new(TemplateId::BaselineCode, vec!["I cannot write this.".into()]).for_sample(1));
    with_mock(s, |ctx| {
        let batch = generate_candidates(ctx, &task("t", "f"), 3, Generator::Vanilla, CoveConfig::default()).unwrap();
        assert_eq!(batch.candidates.iter().map(|c| c.candidate_index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(batch.diagnostics.len(), 1);
        assert!(batch.diagnostics[0].contains("candidate 1"));
    });
}

#[test]
fn five_cove_candidates_are_indexed() {
    with_mock(script(&[0]), |ctx| {
        let batch = generate_candidates(ctx, &task("t", "f"), 5, Generator::Cove, CoveConfig::default()).unwrap();
        assert_eq!(batch.candidates.iter().map(|c| c.candidate_index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(generate_candidates(ctx, &task("t", "f"), 0, Generator::Cove, CoveConfig::default()).is_err());
    });
}

#[test]
fn incomplete_plan_is_regenerated_then_filled() {
    let mut s = MockScript::default();
    s.push(MockRule::new(TemplateId::VerifyPlan, vec!["[correctness] A?\n[logic] B?".into()]).for_attempt(0));
    s.push(MockRule::new(TemplateId::VerifyPlan, vec!["[correctness] A?\n[logic] B?\n[edge_case] C?".into()]));
    with_mock(s, |ctx| {
        let qs = build_verification_plan(ctx, &task("t", "f"), "def f(x):\n    return x", 0).unwrap();
        for c in QuestionCategory::ALL {
            assert!(qs.iter().any(|q| q.category == c), "{c:?} missing");
        }
        assert_eq!(qs[2].text, "C?");
        assert!(build_verification_plan(ctx, &task("t", "f"), "  ", 0).is_err());
    });
}

#[test]
fn short_answers_are_padded_as_defects() {
    let mut s = MockScript::default();
    s.push(MockRule::new(TemplateId::VerifyAnswer, vec!["A1: fine\nA2: fine".into()]));
    with_mock(s, |ctx| {
        let qs = build_plan_locally();
        let rec = answer_questions(ctx, &task("t", "f"), "def f(x):\n    return x", &qs, 0, 0, false).unwrap();
        assert_eq!(rec.answers.len(), 5);
        assert_eq!(rec.verdict, Verdict::IssuesFound);
        assert_eq!(rec.answers[4].defect.as_deref(), Some("unanswered"));
    });
}

fn build_plan_locally() -> Vec<convertest_core::model::VerificationQuestion> {
    QuestionCategory::ALL.into_iter().map(convertest_core::codegen::fallback_question).collect()
}

#[test]
fn per_question_mode_asks_each_question_separately() {
    let provider = Counting::new(MockProvider::new(script(&[])));
    let prompts = PromptSet::default();
    let ctx = GenContext { provider: &provider, prompts: &prompts, sampling: Sampling::default(), model_id: "m".into() };
    let qs = build_plan_locally();
    let rec = answer_questions(&ctx, &task("t", "f"), "def f(x):\n    return x", &qs, 0, 0, true).unwrap();
    assert_eq!(provider.count(), 5);
    assert_eq!(rec.answers.len(), 5);
}

#[test]
fn answers_require_consecutive_numbering() {
    assert_eq!(parse_answers(CLEAN).unwrap().len(), 5);
    assert!(parse_answers("A1: x\nA3: y").is_none());
    let a = parse_answers(FLAGGED).unwrap();
    assert!(a[1].defect.is_some() && a[0].defect.is_none());
}
