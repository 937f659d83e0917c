//! Two-step prompting: a recognized sign becomes a short spoken reply, which
//! is then annotated with gesture spans from the descriptor database.

mod backend;

pub use backend::{
    BackendError, HttpBackend, LlmBackend, MockBackend, ScriptedBackend, API_KEY_ENV, DEFAULT_BASE_URL, DEFAULT_MODEL,
    DEFAULT_TIMEOUT,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gesture::{parse_markup, strip_bracket_tokens, DescriptorDb, TaggedScript};

/// Line separating instructions from the payload in both prompts.
pub const DELIMITER: &str = "####";
/// Prefix of the note appended to a step-2 prompt after a rejected answer.
pub const RETRY_NOTE: &str = "\n\nYour previous answer was rejected: ";
pub const DEFAULT_MAX_RETRIES: usize = 2;

const STEP1_DEFAULT: &str = include_str!("../../assets/templates/step1.txt");
const STEP2_DEFAULT: &str = include_str!("../../assets/templates/step2.txt");

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("invalid recognition event: {0}")]
    Event(String),
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionEvent {
    pub gloss: String,
    pub confidence_pct: f64,
}

impl RecognitionEvent {
    pub fn new(gloss: impl Into<String>, confidence_pct: f64) -> Result<Self, DialogueError> {
        let ev = Self {
            gloss: gloss.into(),
            confidence_pct,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.gloss.trim().is_empty() {
            return Err(DialogueError::Event("gloss is empty".into()));
        }
        if !(0.0..=100.0).contains(&self.confidence_pct) {
            return Err(DialogueError::Event(format!(
                "confidence {} is outside [0, 100]",
                self.confidence_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub step1: String,
    pub step2: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            step1: STEP1_DEFAULT.to_string(),
            step2: STEP2_DEFAULT.to_string(),
        }
    }
}

fn check_template(name: &str, text: &str, placeholders: &[&str]) -> Result<(), DialogueError> {
    for p in placeholders {
        let n = text.matches(&format!("{{{p}}}")).count();
        if n != 1 {
            return Err(DialogueError::Template(format!(
                "{name} must contain {{{p}}} exactly once, found {n}"
            )));
        }
    }
    if !text.lines().any(|l| l.trim() == DELIMITER) {
        return Err(DialogueError::Template(format!("{name} has no `{DELIMITER}` line")));
    }
    Ok(())
}

impl PromptTemplate {
    pub fn new(step1: impl Into<String>, step2: impl Into<String>) -> Result<Self, DialogueError> {
        let t = Self {
            step1: step1.into(),
            step2: step2.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        check_template("step1", &self.step1, &["gloss", "confidence"])?;
        check_template("step2", &self.step2, &["descriptors", "dialogue"])
    }

    /// Reads `step1.txt` and `step2.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, DialogueError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| DialogueError::Io { path, source })
        };
        Self::new(read("step1.txt")?, read("step2.txt")?)
    }
}

/// Replaces each `{name}` in one left-to-right pass; substituted text is not
/// rescanned.
fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in values {
            if let Some(after) = tail.strip_prefix('{').and_then(|t| t.strip_prefix(name)).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = after;
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

pub fn render_step1(event: &RecognitionEvent, template: &PromptTemplate) -> Result<String, DialogueError> {
    event.validate()?;
    template.validate()?;
    let confidence = format!("{}", event.confidence_pct.round() as i64);
    Ok(substitute(
        &template.step1,
        &[("gloss", event.gloss.trim()), ("confidence", &confidence)],
    ))
}

/// One block per descriptor, in database order.
pub fn descriptor_listing(db: &DescriptorDb) -> String {
    let mut out = String::new();
    for d in db.entries() {
        let _ = writeln!(out, "- tag: {}", d.tag);
        let _ = writeln!(out, "  description: {}", d.description);
        let _ = writeln!(out, "  playtime_s: {}", d.playtime_s);
        let _ = writeln!(out, "  body_parts: {}", d.body_parts.join(", "));
    }
    out.truncate(out.trim_end().len());
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub warnings: Vec<String>,
}

pub fn render_step2(dialogue: &str, db: &DescriptorDb, template: &PromptTemplate) -> Result<RenderedPrompt, DialogueError> {
    template.validate()?;
    let mut warnings = Vec::new();
    if db.is_empty() {
        warnings.push("descriptor database is empty; no gestures can be suggested".to_string());
    }
    let listing = descriptor_listing(db);
    Ok(RenderedPrompt {
        text: substitute(&template.step2, &[("descriptors", &listing), ("dialogue", dialogue.trim())]),
        warnings,
    })
}

/// Result of a full two-step exchange.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Composition {
    /// Step-1 reply.
    pub dialogue: String,
    /// Markup of the final script.
    pub tagged_text: String,
    pub script: TaggedScript,
    /// Step-2 re-invocations after a rejected answer.
    pub retries: usize,
    pub degraded: bool,
    pub warnings: Vec<String>,
}

/// Runs both steps against `backend`. A step-2 answer that fails to parse is
/// retried up to `max_retries` times with the error appended; after that the
/// bracket tokens are stripped and the speech-only script is returned with a
/// warning. Only backend failures are errors.
pub fn compose<B: LlmBackend + ?Sized>(
    event: &RecognitionEvent,
    db: &DescriptorDb,
    backend: &mut B,
    template: &PromptTemplate,
    max_retries: usize,
) -> Result<Composition, DialogueError> {
    let dialogue = backend.complete(&render_step1(event, template)?)?.trim().to_string();
    let step2 = render_step2(&dialogue, db, template)?;
    let mut warnings = step2.warnings;

    let mut prompt = step2.text.clone();
    let mut retries = 0;
    loop {
        let answer = backend.complete(&prompt)?;
        let answer = answer.trim();
        match parse_markup(answer, db) {
            Ok(script) => {
                return Ok(Composition {
                    dialogue,
                    tagged_text: answer.to_string(),
                    script,
                    retries,
                    degraded: false,
                    warnings,
                });
            }
            Err(e) if retries < max_retries => {
                log::debug!("step-2 answer rejected ({e}); retrying");
                retries += 1;
                prompt = format!(
                    "{}{RETRY_NOTE}{e}. Use only the listed tags, as flat spans closed by [/Tag].",
                    step2.text
                );
            }
            Err(e) => {
                let text = strip_bracket_tokens(answer);
                warnings.push(format!("degraded output: gesture markup rejected after {retries} retries ({e})"));
                return Ok(Composition {
                    dialogue,
                    tagged_text: text.clone(),
                    script: TaggedScript::plain(text),
                    retries,
                    degraded: true,
                    warnings,
                });
            }
        }
    }
}
