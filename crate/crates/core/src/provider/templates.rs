use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::TemplateId;
use crate::error::{Error, Result};

const BUILTIN: [(TemplateId, &str); 7] = [
    (TemplateId::StubGen, include_str!("../../templates/stub_gen.txt")),
    (TemplateId::StubComplete, include_str!("../../templates/stub_complete.txt")),
    (TemplateId::HolisticTest, include_str!("../../templates/holistic_test.txt")),
    (TemplateId::BaselineCode, include_str!("../../templates/baseline_code.txt")),
    (TemplateId::VerifyPlan, include_str!("../../templates/verify_plan.txt")),
    (TemplateId::VerifyAnswer, include_str!("../../templates/verify_answer.txt")),
    (TemplateId::GuidedRegen, include_str!("../../templates/guided_regen.txt")),
];

/// Placeholder values for rendering. Unset placeholders render empty.
#[derive(Debug, Clone, Default)]
pub struct Vars<'a> {
    pub description: &'a str,
    pub signature: &'a str,
    pub entry_point: &'a str,
    pub stub: &'a str,
    pub baseline: &'a str,
    pub questions: &'a str,
    pub answers: &'a str,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: TemplateId,
    pub text: String,
    pub hash: String,
}

impl Template {
    pub fn new(id: TemplateId, text: impl Into<String>) -> Self {
        let text = text.into();
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Template { id, text, hash }
    }

    pub fn render(&self, vars: &Vars<'_>) -> String {
        let count = vars.count.map(|c| c.to_string()).unwrap_or_default();
        self.text
            .replace("{{description}}", vars.description)
            .replace("{{signature}}", vars.signature)
            .replace("{{entry_point}}", vars.entry_point)
            .replace("{{stub}}", vars.stub)
            .replace("{{baseline}}", vars.baseline)
            .replace("{{questions}}", vars.questions)
            .replace("{{answers}}", vars.answers)
            .replace("{{count}}", &count)
    }
}

/// The full set of prompt templates for one run.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<TemplateId, Template>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            templates: BUILTIN.iter().map(|(id, text)| (*id, Template::new(*id, *text))).collect(),
        }
    }
}

impl PromptSet {
    /// Built-in templates, overridden by any `<template_id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = PromptSet::default();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                if !text.contains("{{description}}") {
                    return Err(Error::Config(format!(
                        "template {} must embed {{{{description}}}}",
                        path.display()
                    )));
                }
                set.templates.insert(id, Template::new(id, text));
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }

    /// `(template_id, hash)` pairs, for run configuration echoes.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates.iter().map(|(id, t)| (id.as_str().to_string(), t.hash.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_embeds_description_and_renders_non_empty() {
        let set = PromptSet::default();
        let desc = "Return the sum of two integers; negative inputs allowed.";
        let vars = Vars { description: desc, signature: "def add(a, b):", entry_point: "add", count: Some(3), ..Default::default() };
        for id in TemplateId::ALL {
            let rendered = set.get(id).render(&vars);
            assert!(!rendered.trim().is_empty(), "{id} renders empty");
            assert!(rendered.contains(desc), "{id} drops the description");
            assert!(!rendered.contains("{{"), "{id} leaves a placeholder: {rendered}");
        }
    }

    #[test]
    fn override_changes_hash() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("stub_gen.txt"), "Stub for {{description}}").unwrap();
        let set = PromptSet::with_overrides(dir.path()).unwrap();
        assert_ne!(set.get(TemplateId::StubGen).hash, PromptSet::default().get(TemplateId::StubGen).hash);
        assert_eq!(set.get(TemplateId::BaselineCode), PromptSet::default().get(TemplateId::BaselineCode));
    }

    #[test]
    fn override_without_description_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("verify_plan.txt"), "no placeholder").unwrap();
        assert!(PromptSet::with_overrides(dir.path()).is_err());
    }
}
