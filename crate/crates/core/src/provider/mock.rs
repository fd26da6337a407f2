use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{non_empty, GenRequest, GenResponse, Origin, Provider, TemplateId};
use crate::error::{Error, Result};

/// One scripted reply family. A rule applies when the template matches, every
/// `contains` needle occurs in the rendered prompt, and the optional
/// `sample` / `attempt` filters match. The reply is
/// `outputs[(sample_index + shift) % outputs.len()]`, where `shift` is the run
/// seed for rules with `rotate_by_seed` and zero otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub template: TemplateId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rotate_by_seed: bool,
    pub outputs: Vec<String>,
}

impl MockRule {
    pub fn new(template: TemplateId, outputs: Vec<String>) -> Self {
        MockRule { template, contains: Vec::new(), sample: None, attempt: None, rotate_by_seed: false, outputs }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn for_sample(mut self, sample: usize) -> Self {
        self.sample = Some(sample);
        self
    }

    pub fn for_attempt(mut self, attempt: u32) -> Self {
        self.attempt = Some(attempt);
        self
    }

    fn matches(&self, req: &GenRequest) -> bool {
        self.template == req.template_id
            && !self.outputs.is_empty()
            && self.contains.iter().all(|n| req.rendered_prompt.contains(n.as_str()))
            && self.sample.is_none_or(|s| s == req.sample_index)
            && self.attempt.is_none_or(|a| a == req.attempt)
    }
}

/// Ordered script of mock replies. Exact digest entries win over rules;
/// rules are tried first to last.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_key: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn push(&mut self, rule: MockRule) -> &mut Self {
        self.rules.push(rule);
        self
    }

    /// Puts `rule` ahead of every existing rule.
    pub fn prepend(&mut self, rule: MockRule) -> &mut Self {
        self.rules.insert(0, rule);
        self
    }
}

/// Deterministic provider: the reply is a pure function of the request.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    script: MockScript,
    digest_dir: Option<PathBuf>,
    seed: u64,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        MockProvider { script, digest_dir: None, seed: 0 }
    }

    /// Also serve `<digest>.txt` files from `dir`, ahead of the script.
    pub fn with_digest_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.digest_dir = Some(dir.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Provider for MockProvider {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        let key = req.cache_key();
        if let Some(dir) = &self.digest_dir {
            let path = dir.join(format!("{key}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                return non_empty(text, Origin::Mock, &key);
            }
        }
        if let Some(text) = self.script.by_key.get(&key) {
            return non_empty(text.clone(), Origin::Mock, &key);
        }
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(req))
            .ok_or_else(|| Error::MockMiss { template: req.template_id.to_string(), key: key.clone() })?;
        let shift = if rule.rotate_by_seed { self.seed as usize } else { 0 };
        let idx = (req.sample_index.wrapping_add(shift)) % rule.outputs.len();
        non_empty(rule.outputs[idx].clone(), Origin::Mock, &key)
    }
}
