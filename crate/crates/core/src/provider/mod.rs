//! Text generation backends and the prompt templates the pipeline uses.
//!
//! Three backends share the [`Provider`] trait: a live OpenAI-compatible chat
//! endpoint, a record/replay cache that can wrap any other provider, and a
//! deterministic scripted mock.

mod cache;
mod live;
mod mock;
mod templates;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::CacheProvider;
pub use live::{LiveConfig, LiveProvider, API_KEY_ENV};
pub use mock::{MockProvider, MockRule, MockScript};
pub use templates::{PromptSet, Template, Vars};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    StubGen,
    StubComplete,
    HolisticTest,
    BaselineCode,
    VerifyPlan,
    VerifyAnswer,
    GuidedRegen,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::StubGen,
        TemplateId::StubComplete,
        TemplateId::HolisticTest,
        TemplateId::BaselineCode,
        TemplateId::VerifyPlan,
        TemplateId::VerifyAnswer,
        TemplateId::GuidedRegen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::StubGen => "stub_gen",
            TemplateId::StubComplete => "stub_complete",
            TemplateId::HolisticTest => "holistic_test",
            TemplateId::BaselineCode => "baseline_code",
            TemplateId::VerifyPlan => "verify_plan",
            TemplateId::VerifyAnswer => "verify_answer",
            TemplateId::GuidedRegen => "guided_regen",
        }
    }

    /// Test-side templates sample hot for diversity; code-side ones run cool.
    pub fn is_test_side(self) -> bool {
        matches!(self, TemplateId::StubGen | TemplateId::StubComplete | TemplateId::HolisticTest)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Sampling parameters per template family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub test_temperature: f64,
    pub code_temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { test_temperature: 0.8, code_temperature: 0.2, max_tokens: 2048 }
    }
}

impl Sampling {
    pub fn params_for(&self, id: TemplateId) -> GenParams {
        let temperature = if id.is_test_side() { self.test_temperature } else { self.code_temperature };
        GenParams { temperature, max_tokens: self.max_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub template_id: TemplateId,
    /// Digest of the template file the prompt was rendered from.
    pub template_hash: String,
    pub rendered_prompt: String,
    pub params: GenParams,
    pub sample_index: usize,
    /// Retry ordinal for regenerations of the same logical sample.
    #[serde(default)]
    pub attempt: u32,
    pub model_id: String,
}

impl GenRequest {
    /// Stable digest identifying this request in caches and mock directories.
    pub fn cache_key(&self) -> String {
        // Field order is fixed by the struct, so the encoding is stable.
        let encoded = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&encoded))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Live,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenResponse {
    pub text: String,
    pub origin: Origin,
}

pub trait Provider: Send + Sync {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        (**self).generate(req)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        (**self).generate(req)
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        (**self).generate(req)
    }
}

pub(crate) fn non_empty(text: String, origin: Origin, key: &str) -> Result<GenResponse> {
    if text.is_empty() {
        return Err(Error::EmptyResponse { key: key.to_string() });
    }
    Ok(GenResponse { text, origin })
}

/// Counts requests passing through to the wrapped provider.
pub struct Counting<P> {
    inner: P,
    count: AtomicUsize,
}

impl<P: Provider> Counting<P> {
    pub fn new(inner: P) -> Self {
        Counting { inner, count: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl<P: Provider> Provider for Counting<P> {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.generate(req)
    }
}

/// Everything a pipeline stage needs to issue requests.
pub struct GenContext<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptSet,
    pub sampling: Sampling,
    pub model_id: String,
}

impl GenContext<'_> {
    pub fn request(&self, id: TemplateId, vars: &Vars<'_>, sample_index: usize, attempt: u32) -> GenRequest {
        let template = self.prompts.get(id);
        GenRequest {
            template_id: id,
            template_hash: template.hash.clone(),
            rendered_prompt: template.render(vars),
            params: self.sampling.params_for(id),
            sample_index,
            attempt,
            model_id: self.model_id.clone(),
        }
    }

    pub fn generate(&self, id: TemplateId, vars: &Vars<'_>, sample_index: usize, attempt: u32) -> Result<String> {
        let req = self.request(id, vars, sample_index, attempt);
        Ok(self.provider.generate(&req)?.text)
    }
}

/// Returns the body of the first fenced code block, or the trimmed text when
/// there is no fence.
pub fn extract_code_block(text: &str) -> String {
    let Some(open) = text.find("```") else {
        return text.trim().to_string();
    };
    let after_fence = &text[open + 3..];
    // skip the info string (`python`, `py`, ...) up to the end of the line
    let body_start = match after_fence.find('\n') {
        Some(nl) => nl + 1,
        None => return text.trim().to_string(),
    };
    let body = &after_fence[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    let block = &body[..end];
    block.strip_suffix('\n').unwrap_or(block).to_string()
}
