//! Suite quality metrics: validity rate, line coverage, mutation score, and
//! precision / recall / F1 of the valid-test filter.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TestLabel, Validity};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub n_tasks: usize,
    pub n_tests: usize,
    pub n_kept: usize,
    pub n_actual_valid: usize,
    pub mutants_total: usize,
    pub mutants_killed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub vr: Option<f64>,
    pub lc: f64,
    pub ms: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub counts: MetricCounts,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Pooled `sum(valid) / sum(total)`; absent when there are no tests.
pub fn validity_rate(valid: &[usize], total: &[usize]) -> Result<Option<f64>> {
    if valid.len() != total.len() {
        return Err(Error::Precondition("valid and total counts differ in length".into()));
    }
    if let Some(i) = valid.iter().zip(total).position(|(v, m)| v > m) {
        return Err(Error::Precondition(format!("task {i} has more valid tests than tests")));
    }
    Ok(ratio(valid.iter().sum(), total.iter().sum()))
}

/// Covered-line sets of one task's tests, and the task's line total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCoverage {
    pub per_test: Vec<BTreeSet<u32>>,
    pub total_lines: u32,
}

impl TaskCoverage {
    pub fn ratio(&self) -> Result<f64> {
        if self.total_lines == 0 {
            return Err(Error::Precondition("task has zero lines".into()));
        }
        let union: BTreeSet<u32> = self.per_test.iter().flatten().copied().collect();
        Ok(union.len() as f64 / self.total_lines as f64)
    }
}

/// Unweighted mean over tasks of `|union of covered lines| / total lines`.
pub fn line_coverage(tasks: &[TaskCoverage]) -> Result<f64> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in tasks {
        sum += t.ratio()?;
    }
    Ok(sum / tasks.len() as f64)
}

/// Pooled `sum(killed) / sum(mutants)`; absent when there are no mutants.
pub fn mutation_score(killed: &[usize], total: &[usize]) -> Option<f64> {
    ratio(killed.iter().sum(), total.iter().sum())
}

/// A mutant is killed when some test in the suite passes on the original and
/// does not pass on the mutant.
pub fn is_killed(suite: &[usize], original_pass: &[bool], mutant_pass: &[bool]) -> bool {
    suite.iter().any(|&t| original_pass[t] && !mutant_pass[t])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision and recall of "kept" (predicted valid) against actual validity.
pub fn classification_scores(labels: &[TestLabel]) -> Result<ClassificationScores> {
    let mut kept = 0;
    let mut actual_valid = 0;
    let mut both = 0;
    for l in labels {
        let actual = l
            .actual
            .ok_or_else(|| Error::Precondition(format!("test {} has no ground-truth label", l.test)))?;
        let k = l.predicted == Validity::Valid;
        let v = actual == Validity::Valid;
        kept += k as usize;
        actual_valid += v as usize;
        both += (k && v) as usize;
    }
    let precision = ratio(both, kept);
    let recall = ratio(both, actual_valid);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => Some(f1_score(p, r)),
        _ => None,
    };
    Ok(ClassificationScores { precision, recall, f1 })
}

/// Everything metrics need to know about one task's generated tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEvidence {
    pub task_id: String,
    /// Predicted-valid flag per generated test.
    pub kept: Vec<bool>,
    /// Passes on the reference implementation, per test.
    pub actual_valid: Vec<bool>,
    /// Lines of the reference implementation each test covered.
    pub covered: Vec<BTreeSet<u32>>,
    pub total_lines: u32,
    /// Per mutant, per test pass flags. `None` when mutants were unavailable.
    pub mutant_pass: Option<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteView {
    /// Every generated test.
    Unfiltered,
    /// Only tests labeled valid by the consensus stage.
    Filtered,
}

/// Aggregates task evidence into one metric block. The unfiltered view scores
/// the filter as "keep everything", so its precision equals its VR.
pub fn suite_metrics(tasks: &[TaskEvidence], view: SuiteView) -> Result<SuiteMetrics> {
    let mut counts = MetricCounts { n_tasks: tasks.len(), ..Default::default() };
    let mut valid_in_suite = 0;
    let mut coverage = Vec::with_capacity(tasks.len());
    let mut any_mutants = false;
    let mut labels = Vec::new();

    for t in tasks {
        let n = t.actual_valid.len();
        if t.kept.len() != n || t.covered.len() != n {
            return Err(Error::Precondition(format!("{}: evidence vectors differ in length", t.task_id)));
        }
        let suite: Vec<usize> = (0..n).filter(|&j| view == SuiteView::Unfiltered || t.kept[j]).collect();
        counts.n_tests += suite.len();
        counts.n_kept += suite.len();
        counts.n_actual_valid += t.actual_valid.iter().filter(|&&v| v).count();
        valid_in_suite += suite.iter().filter(|&&j| t.actual_valid[j]).count();
        coverage.push(TaskCoverage {
            per_test: suite.iter().map(|&j| t.covered[j].clone()).collect(),
            total_lines: t.total_lines.max(1),
        });
        if let Some(mutants) = &t.mutant_pass {
            any_mutants = true;
            counts.mutants_total += mutants.len();
            counts.mutants_killed += mutants.iter().filter(|m| is_killed(&suite, &t.actual_valid, m)).count();
        }
        for j in 0..n {
            let predicted = view == SuiteView::Unfiltered || t.kept[j];
            labels.push(TestLabel {
                test: j,
                predicted: Validity::from_pass(predicted),
                actual: Some(Validity::from_pass(t.actual_valid[j])),
            });
        }
    }
    if view == SuiteView::Unfiltered {
        counts.n_kept = counts.n_tests;
    }
    let scores = classification_scores(&labels)?;
    Ok(SuiteMetrics {
        vr: ratio(valid_in_suite, counts.n_tests),
        lc: line_coverage(&coverage)?,
        ms: if any_mutants { mutation_score(&[counts.mutants_killed], &[counts.mutants_total]) } else { None },
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(v: &[u32]) -> BTreeSet<u32> {
        v.iter().copied().collect()
    }

    fn label(kept: bool, valid: bool) -> TestLabel {
        TestLabel { test: 0, predicted: Validity::from_pass(kept), actual: Some(Validity::from_pass(valid)) }
    }

    #[test]
    fn validity_rate_is_pooled() {
        assert_eq!(validity_rate(&[1, 3], &[2, 3]).unwrap(), Some(0.8));
        assert_eq!(validity_rate(&[2, 3], &[2, 3]).unwrap(), Some(1.0));
        assert_eq!(validity_rate(&[0, 0], &[5, 5]).unwrap(), Some(0.0));
        assert_eq!(validity_rate(&[0], &[0]).unwrap(), None);
        assert!(validity_rate(&[3], &[2]).is_err());
    }

    #[test]
    fn coverage_uses_union_then_mean() {
        let one = TaskCoverage { per_test: vec![lines(&[1, 2]), lines(&[2, 3])], total_lines: 4 };
        assert_eq!(line_coverage(std::slice::from_ref(&one)).unwrap(), 0.75);
        let full = TaskCoverage { per_test: vec![lines(&[1, 2])], total_lines: 2 };
        let half = TaskCoverage { per_test: vec![lines(&[1])], total_lines: 2 };
        assert_eq!(line_coverage(&[full, half]).unwrap(), 0.75);
        let none = TaskCoverage { per_test: vec![], total_lines: 5 };
        assert_eq!(line_coverage(&[none]).unwrap(), 0.0);
    }

    #[test]
    fn mutation_score_is_pooled() {
        assert_eq!(mutation_score(&[2, 3], &[4, 6]), Some(0.5));
        assert_eq!(mutation_score(&[4], &[4]), Some(1.0));
        assert_eq!(mutation_score(&[0], &[0]), None);
    }

    #[test]
    fn invalid_tests_cannot_kill() {
        // test 0 fails the original, so its failure on the mutant is not a kill
        assert!(!is_killed(&[0], &[false, true], &[false, true]));
        assert!(is_killed(&[0, 1], &[false, true], &[false, false]));
    }

    #[test]
    fn precision_recall_f1() {
        // kept 8 (6 truly valid), 7 valid overall
        let mut labels = vec![label(true, true); 6];
        labels.extend(vec![label(true, false); 2]);
        labels.push(label(false, true));
        labels.push(label(false, false));
        let s = classification_scores(&labels).unwrap();
        assert!((s.precision.unwrap() - 0.75).abs() < 1e-9);
        assert!((s.recall.unwrap() - 6.0 / 7.0).abs() < 1e-9);
        assert!((s.f1.unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn empty_denominators_are_absent() {
        let s = classification_scores(&[label(false, false)]).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, None);
        assert_eq!(s.f1, None);
        assert!(classification_scores(&[TestLabel { test: 0, predicted: Validity::Valid, actual: None }]).is_err());
    }

    #[test]
    fn zero_precision_and_recall_give_zero_f1() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn filtered_vr_equals_precision() {
        let ev = TaskEvidence {
            task_id: "t".into(),
            kept: vec![true, true, false, true],
            actual_valid: vec![true, false, false, true],
            covered: vec![lines(&[1]), lines(&[2]), lines(&[3]), lines(&[1])],
            total_lines: 3,
            mutant_pass: Some(vec![vec![true, true, true, false], vec![true, false, false, true]]),
        };
        for view in [SuiteView::Unfiltered, SuiteView::Filtered] {
            let m = suite_metrics(std::slice::from_ref(&ev), view).unwrap();
            assert_eq!(m.vr.unwrap().to_bits(), m.precision.unwrap().to_bits());
        }
        let pre = suite_metrics(std::slice::from_ref(&ev), SuiteView::Unfiltered).unwrap();
        let post = suite_metrics(std::slice::from_ref(&ev), SuiteView::Filtered).unwrap();
        assert_eq!(pre.recall, Some(1.0));
        assert!(post.lc <= pre.lc);
        assert!(post.ms.unwrap() <= pre.ms.unwrap());
        assert_eq!(post.counts.n_kept, 3);
    }
}
