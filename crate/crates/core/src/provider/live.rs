use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{non_empty, GenRequest, GenResponse, Origin, Provider};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "CONVERTEST_API_KEY";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Either the full chat-completions URL or an API base it is appended to.
    pub base_url: String,
    pub api_key: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub request_timeout: Duration,
}

impl LiveConfig {
    pub fn from_env(base_url: impl Into<String>) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| Error::MissingCredential(API_KEY_ENV))?;
        Ok(LiveConfig::new(base_url, api_key))
    }

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        LiveConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            request_timeout: Duration::from_secs(120),
        }
    }

    fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible chat-completion client.
pub struct LiveProvider {
    cfg: LiveConfig,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl LiveProvider {
    pub fn new(cfg: LiveConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(LiveProvider { cfg, client })
    }

    /// Prompt as sent on the wire. The sample index rides along as a trailing
    /// comment so repeated samples are distinct requests.
    pub fn salted_prompt(req: &GenRequest) -> String {
        format!("{}\n\n# sample {}", req.rendered_prompt, req.sample_index)
    }

    fn attempt(&self, req: &GenRequest) -> std::result::Result<String, Attempt> {
        let body = ChatRequest {
            model: &req.model_id,
            messages: vec![ChatMessage { role: "user", content: Self::salted_prompt(req) }],
            temperature: req.params.temperature,
            max_tokens: req.params.max_tokens,
        };
        let resp = self
            .client
            .post(self.cfg.endpoint())
            .bearer_auth(&self.cfg.api_key)
            .json(&body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(Error::Transport { attempts: 1, message: format!("HTTP {status}: {text}") }));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| Attempt::Retry(format!("bad response body: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

impl Provider for LiveProvider {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        let mut backoff = self.cfg.initial_backoff;
        let mut last = String::new();
        for n in 1..=self.cfg.max_attempts.max(1) {
            match self.attempt(req) {
                Ok(text) => return non_empty(text, Origin::Live, &req.cache_key()),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("live provider attempt {n} failed: {msg}");
                    last = msg;
                    if n < self.cfg.max_attempts {
                        std::thread::sleep(backoff);
                        backoff = (backoff * 2).min(self.cfg.max_backoff);
                    }
                }
            }
        }
        Err(Error::Transport { attempts: self.cfg.max_attempts.max(1), message: last })
    }
}
