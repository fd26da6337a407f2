//! Dual execution agreement over an execution matrix.
//!
//! Candidates that pass exactly the same tests form an agreement set. Sets
//! are scored by `passed * sqrt(size)`; the top set supplies the reference
//! solution, and each test is labeled by whether that solution passes it.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgreementSet, ExecutionMatrix, TestLabel, Validity};

pub fn consensus_score(passed: usize, set_size: usize) -> Result<f64> {
    if set_size == 0 {
        return Err(Error::Precondition("agreement set size must be at least 1".into()));
    }
    Ok(passed as f64 * (set_size as f64).sqrt())
}

/// Ranking order: higher score first, then more tests passed, then the
/// smallest member row. Scores are compared as `passed^2 * size` in integers
/// so equal products tie exactly.
pub fn rank_order(a: &AgreementSet, b: &AgreementSet) -> Ordering {
    let key = |s: &AgreementSet| {
        let p = s.popcount() as u128;
        p * p * s.members.len() as u128
    };
    key(b)
        .cmp(&key(a))
        .then(b.popcount().cmp(&a.popcount()))
        .then(a.members.first().cmp(&b.members.first()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Ranked best first.
    pub sets: Vec<AgreementSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Groups matrix rows by identical pass vector and ranks the groups.
pub fn partition(matrix: &ExecutionMatrix) -> Partition {
    if matrix.rows() == 0 || matrix.cols() == 0 {
        return Partition {
            sets: Vec::new(),
            diagnostic: Some(format!(
                "{}: empty execution matrix ({} candidates x {} tests)",
                matrix.task_id,
                matrix.rows(),
                matrix.cols()
            )),
        };
    }
    let mut by_vector: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut sets: Vec<AgreementSet> = Vec::new();
    for row in 0..matrix.rows() {
        let v = matrix.pass_row(row);
        match by_vector.get(&v) {
            Some(&i) => sets[i].members.push(row),
            None => {
                by_vector.insert(v.clone(), sets.len());
                sets.push(AgreementSet { pass_vector: v, members: vec![row], score: 0.0 });
            }
        }
    }
    for s in &mut sets {
        s.score = s.popcount() as f64 * (s.members.len() as f64).sqrt();
    }
    sets.sort_by(rank_order);
    Partition { sets, diagnostic: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Matrix row of the representative solution.
    pub row: usize,
    pub candidate_index: usize,
    pub set: AgreementSet,
}

/// Picks the top-ranked set and its smallest-index member.
pub fn select_best(sets: &[AgreementSet], matrix: &ExecutionMatrix) -> Result<Selection> {
    let best = sets.first().ok_or(Error::NoCandidates)?;
    let row = *best.members.iter().min().ok_or(Error::NoCandidates)?;
    let candidate_index = *matrix
        .candidates
        .get(row)
        .ok_or_else(|| Error::Precondition(format!("set member {row} is not a matrix row")))?;
    Ok(Selection { row, candidate_index, set: best.clone() })
}

/// Labels each test valid iff the chosen row passes it. `ground_truth`, when
/// given, holds per-test pass flags against the reference implementation.
pub fn label_tests(best_row: usize, matrix: &ExecutionMatrix, ground_truth: Option<&[bool]>) -> Result<Vec<TestLabel>> {
    let row = matrix
        .cells
        .get(best_row)
        .ok_or_else(|| Error::Precondition(format!("row {best_row} is not in the matrix")))?;
    Ok(row
        .iter()
        .enumerate()
        .map(|(j, cell)| TestLabel {
            test: matrix.tests[j],
            predicted: Validity::from_pass(cell.passed()),
            actual: ground_truth.and_then(|g| g.get(j)).map(|&p| Validity::from_pass(p)),
        })
        .collect())
}
