use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExecJob, Executor, ExecutorConfig, Mutant, MutantSet, Session};
use crate::error::{Error, Result};
use crate::model::{ExecStatus, ExecutionOutcome};

/// Identity of a source in the simulated oracle: the first `# sim: <label>`
/// comment, or `sha:<12 hex>` of the text when there is none.
pub fn sim_label(source: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"#\s*sim:\s*(\S+)").expect("static regex"));
    match re.captures(source) {
        Some(c) => c[1].to_string(),
        None => format!("sha:{}", &hex::encode(Sha256::digest(source.as_bytes()))[..12]),
    }
}

/// Behaviour of one test: it passes on the listed solutions and ends with
/// `otherwise` on every other known solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTest {
    pub pass: Vec<String>,
    #[serde(default = "default_otherwise")]
    pub otherwise: ExecStatus,
    #[serde(default)]
    pub covered_lines: BTreeSet<u32>,
}

fn default_otherwise() -> ExecStatus {
    ExecStatus::Fail
}

/// Explicit outcome for one pair, taking precedence over [`SimTest`] rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCell {
    pub solution: String,
    pub test: String,
    pub status: ExecStatus,
    #[serde(default)]
    pub covered_lines: BTreeSet<u32>,
    #[serde(default)]
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimMutant {
    pub id: String,
    pub label: String,
    pub operator: String,
    pub line: u32,
}

/// Fixture describing how every known (solution, test) pair behaves.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOracle {
    /// Known solution labels. Mutant labels are known implicitly.
    #[serde(default)]
    pub solutions: BTreeSet<String>,
    #[serde(default)]
    pub tests: BTreeMap<String, SimTest>,
    #[serde(default)]
    pub cells: Vec<SimCell>,
    /// Mutants per original solution label.
    #[serde(default)]
    pub mutants: BTreeMap<String, Vec<SimMutant>>,
}

impl SimOracle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn is_known(&self, solution: &str) -> bool {
        self.solutions.contains(solution) || self.mutants.values().flatten().any(|m| m.label == solution)
    }

    pub fn outcome(&self, solution: &str, test: &str) -> Result<ExecutionOutcome> {
        if let Some(c) = self.cells.iter().find(|c| c.solution == solution && c.test == test) {
            let diagnostic = if c.status == ExecStatus::Pass { String::new() } else { c.diagnostic.clone() };
            return Ok(ExecutionOutcome { status: c.status, covered_lines: c.covered_lines.clone(), wall_ms: 0, diagnostic });
        }
        let miss = || Error::SimulatedMiss { solution: solution.to_string(), test: test.to_string() };
        let rule = self.tests.get(test).ok_or_else(miss)?;
        if !self.is_known(solution) {
            return Err(miss());
        }
        let status = if rule.pass.iter().any(|s| s == solution) { ExecStatus::Pass } else { rule.otherwise };
        let diagnostic = match status {
            ExecStatus::Pass => String::new(),
            other => format!("simulated {other:?}").to_lowercase(),
        };
        Ok(ExecutionOutcome { status, covered_lines: rule.covered_lines.clone(), wall_ms: 0, diagnostic })
    }
}

/// In-memory executor answering from a [`SimOracle`].
#[derive(Debug, Clone)]
pub struct SimulatedExecutor {
    oracle: SimOracle,
}

impl SimulatedExecutor {
    pub fn new(oracle: SimOracle) -> Self {
        SimulatedExecutor { oracle }
    }
}

struct SimSession<'a> {
    oracle: &'a SimOracle,
}

impl Session for SimSession<'_> {
    fn exec(&mut self, job: &ExecJob) -> Result<ExecutionOutcome> {
        self.oracle.outcome(&sim_label(&job.solution), &sim_label(&job.test))
    }
}

impl Executor for SimulatedExecutor {
    fn open(&self, _cfg: &ExecutorConfig) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(SimSession { oracle: &self.oracle }))
    }

    fn mutants(&self, source: &str, _cfg: &ExecutorConfig) -> Result<MutantSet> {
        let label = sim_label(source);
        match self.oracle.mutants.get(&label) {
            Some(list) => Ok(MutantSet {
                mutants: list
                    .iter()
                    .map(|m| Mutant {
                        mutant_id: m.id.clone(),
                        source: format!("# sim: {}\n{source}", m.label),
                        operator: m.operator.clone(),
                        line: m.line,
                    })
                    .collect(),
                diagnostic: None,
            }),
            None => Ok(MutantSet { mutants: Vec::new(), diagnostic: Some(format!("no simulated mutants for {label}")) }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> SimOracle {
        SimOracle {
            solutions: ["good", "bad"].iter().map(|s| s.to_string()).collect(),
            tests: [(
                "t0".to_string(),
                SimTest { pass: vec!["good".into()], otherwise: ExecStatus::Fail, covered_lines: [1, 2].into_iter().collect() },
            )]
            .into_iter()
            .collect(),
            cells: vec![SimCell {
                solution: "bad".into(),
                test: "t1".into(),
                status: ExecStatus::Timeout,
                covered_lines: BTreeSet::new(),
                diagnostic: "slow".into(),
            }],
            mutants: [(
                "good".to_string(),
                vec![SimMutant { id: "arith#0".into(), label: "good.m0".into(), operator: "arith".into(), line: 2 }],
            )]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn labels_come_from_sim_comment_or_digest() {
        assert_eq!(sim_label("def f():\n    # sim: good\n    return 1\n"), "good");
        assert!(sim_label("def f(): return 1").starts_with("sha:"));
        assert_eq!(sim_label("# sim: first\n# sim: second\n"), "first");
    }

    #[test]
    fn rules_and_cells_resolve() {
        let o = oracle();
        assert_eq!(o.outcome("good", "t0").unwrap().status, ExecStatus::Pass);
        assert!(o.outcome("good", "t0").unwrap().diagnostic.is_empty());
        assert_eq!(o.outcome("bad", "t0").unwrap().status, ExecStatus::Fail);
        assert_eq!(o.outcome("bad", "t1").unwrap().status, ExecStatus::Timeout);
        assert_eq!(o.outcome("good.m0", "t0").unwrap().status, ExecStatus::Fail);
    }

    #[test]
    fn unknown_pairs_are_fatal_and_named() {
        let o = oracle();
        let err = o.outcome("good", "t9").unwrap_err().to_string();
        assert!(err.contains("good") && err.contains("t9"), "{err}");
        assert!(o.outcome("stranger", "t0").is_err());
    }

    #[test]
    fn mutants_carry_their_label_first() {
        let exec = SimulatedExecutor::new(oracle());
        let set = exec.mutants("def f():\n    # sim: good\n    return 1\n", &ExecutorConfig::default()).unwrap();
        assert_eq!(set.mutants.len(), 1);
        assert_eq!(sim_label(&set.mutants[0].source), "good.m0");
        let none = exec.mutants("def g(): pass", &ExecutorConfig::default()).unwrap();
        assert!(none.mutants.is_empty());
        assert!(none.diagnostic.is_some());
    }
}
