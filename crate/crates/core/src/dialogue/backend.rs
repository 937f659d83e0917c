//! Language-model backends: a chat-completions HTTP client, a deterministic
//! offline mock and a scripted stub for tests.

use std::collections::VecDeque;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{DELIMITER, RETRY_NOTE};

pub const API_KEY_ENV: &str = "SIGNPIPE_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Response(String),
    #[error("scripted backend has no response left for call {0}")]
    Exhausted(usize),
}

/// Synchronous prompt-in, text-out completion.
pub trait LlmBackend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

/// Replays fixed responses in order and records every prompt it receives.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: VecDeque<String>,
    pub prompts: Vec<String>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
            prompts: Vec::new(),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError> {
        self.prompts.push(prompt.to_string());
        self.responses.pop_front().ok_or(BackendError::Exhausted(self.prompts.len()))
    }
}

/// Offline stand-in whose answer depends only on `(seed, prompt)`.
///
/// Prompts listing `- tag:` descriptor blocks are treated as annotation
/// requests: sentences of the payload are wrapped in spans using the listed
/// tags. Anything else gets a short canned reply built around the gloss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockBackend {
    pub seed: u64,
}

const CANNED: [&str; 4] = [
    "Great! You signed {gloss}. Let me think about a place where we use that word.",
    "Nice work on {gloss}! Your hands were clear and steady. Shall we try another one?",
    "I saw {gloss}. That looks right to me. Keep practising and it will feel natural.",
    "Wonderful, that was {gloss}! Can you show me the sign once more, a little slower?",
];

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn digest(&self, prompt: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.as_bytes());
        h.finalize().into()
    }

    fn respond(&self, prompt: &str) -> String {
        let digest = self.digest(prompt);
        let body = prompt.split(RETRY_NOTE).next().unwrap_or(prompt);
        let payload = match body.rfind(DELIMITER) {
            Some(i) => body[i + DELIMITER.len()..].trim(),
            None => body.trim(),
        };
        let tags: Vec<&str> = body
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix("- tag:"))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if body.contains("- tag:") {
            annotate(payload, &tags, &digest)
        } else {
            let gloss = extract_gloss(payload).unwrap_or("that sign");
            CANNED[digest[0] as usize % CANNED.len()].replace("{gloss}", gloss)
        }
    }
}

impl LlmBackend for MockBackend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError> {
        Ok(self.respond(prompt))
    }
}

fn extract_gloss(payload: &str) -> Option<&str> {
    let rest = &payload[payload.find("depicted a ")? + "depicted a ".len()..];
    let gloss = rest[..rest.find(" with a ")?].trim();
    (!gloss.is_empty()).then_some(gloss)
}

/// Splits after `.`, `!` or `?` runs that end a word.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let next = chars.get(k + 1).map(|&(_, n)| n);
        if matches!(c, '.' | '!' | '?') && next.is_none_or(char::is_whitespace) {
            let end = i + c.len_utf8();
            out.push(text[start..end].trim());
            start = end;
        }
    }
    if !text[start..].trim().is_empty() {
        out.push(text[start..].trim());
    }
    out
}

fn annotate(payload: &str, tags: &[&str], digest: &[u8; 32]) -> String {
    if tags.is_empty() {
        return payload.to_string();
    }
    let parts: Vec<String> = sentences(payload)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let b = digest[i % digest.len()];
            if i > 0 && b & 1 == 1 {
                return s.to_string();
            }
            let body = s.trim_end_matches(['.', '!', '?']);
            let punct = &s[body.len()..];
            if body.trim().is_empty() {
                return s.to_string();
            }
            let tag = tags[(b >> 1) as usize % tags.len()];
            format!("[{tag}] {} [/{tag}]{punct}", body.trim())
        })
        .collect();
    parts.join(" ")
}

/// OpenAI-style `POST {base_url}/chat/completions` client.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Reads the bearer token from [`API_KEY_ENV`] if set.
    pub fn from_env(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        let mut b = Self::new(base_url, model);
        b.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        b
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| BackendError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Response("no choices in response".into()))
    }
}
