//! Flat bracket markup: `text [Tag] spoken words [/Tag] more text`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{is_valid_tag, DescriptorDb};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Plain { text: String },
    Span { tag: String, text: String },
}

impl Segment {
    pub fn text(&self) -> &str {
        match self {
            Segment::Plain { text } | Segment::Span { text, .. } => text,
        }
    }

    pub fn tag(&self) -> Option<&str> {
        match self {
            Segment::Plain { .. } => None,
            Segment::Span { tag, .. } => Some(tag),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedScript {
    pub segments: Vec<Segment>,
}

impl TaggedScript {
    pub fn plain(text: impl Into<String>) -> Self {
        let text = text.into();
        if text.is_empty() {
            return Self::default();
        }
        Self {
            segments: vec![Segment::Plain { text }],
        }
    }

    pub fn span_tags(&self) -> Vec<&str> {
        self.segments.iter().filter_map(Segment::tag).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkupErrorKind {
    UnknownTag(String),
    Unclosed(String),
    MismatchedClose { expected: String, found: String },
    StrayClose(String),
    NestedOpen { outer: String, inner: String },
    InvalidTag(String),
    UnterminatedBracket,
}

impl fmt::Display for MarkupErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownTag(t) => write!(f, "unknown gesture tag `{t}`"),
            Self::Unclosed(t) => write!(f, "span `{t}` is never closed"),
            Self::MismatchedClose { expected, found } => {
                write!(f, "closing tag `{found}` does not match open span `{expected}`")
            }
            Self::StrayClose(t) => write!(f, "closing tag `{t}` without an open span"),
            Self::NestedOpen { outer, inner } => write!(f, "span `{inner}` opened inside span `{outer}`"),
            Self::InvalidTag(t) => write!(f, "invalid tag token `[{t}]`"),
            Self::UnterminatedBracket => write!(f, "'[' without a matching ']'"),
        }
    }
}

/// Markup error at a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at byte {offset}")]
pub struct MarkupError {
    pub offset: usize,
    pub kind: MarkupErrorKind,
}

impl MarkupError {
    fn at(offset: usize, kind: MarkupErrorKind) -> Self {
        Self { offset, kind }
    }
}

/// Parses flat gesture markup. Structure is checked before tag names, so a
/// nesting error is reported even when the tags are also unknown.
pub fn parse_markup(text: &str, db: &DescriptorDb) -> Result<TaggedScript, MarkupError> {
    let mut segments = Vec::new();
    let mut span_offsets = Vec::new();
    // (tag, offset of '[', start of inner text)
    let mut open: Option<(String, usize, usize)> = None;
    let mut plain_start = 0;
    let mut pos = 0;

    while let Some(rel) = text[pos..].find('[') {
        let at = pos + rel;
        let close = match text[at..].find(']') {
            Some(c) => at + c,
            None => return Err(MarkupError::at(at, MarkupErrorKind::UnterminatedBracket)),
        };
        let inner = &text[at + 1..close];
        let (closing, name) = match inner.strip_prefix('/') {
            Some(name) => (true, name),
            None => (false, inner),
        };
        if !is_valid_tag(name) {
            return Err(MarkupError::at(at, MarkupErrorKind::InvalidTag(inner.to_string())));
        }
        match (&open, closing) {
            (Some((outer, _, _)), false) => {
                return Err(MarkupError::at(
                    at,
                    MarkupErrorKind::NestedOpen {
                        outer: outer.clone(),
                        inner: name.to_string(),
                    },
                ));
            }
            (None, false) => {
                if at > plain_start {
                    segments.push(Segment::Plain {
                        text: text[plain_start..at].to_string(),
                    });
                }
                open = Some((name.to_string(), at, close + 1));
            }
            (None, true) => return Err(MarkupError::at(at, MarkupErrorKind::StrayClose(name.to_string()))),
            (Some((tag, _, _)), true) if tag != name => {
                return Err(MarkupError::at(
                    at,
                    MarkupErrorKind::MismatchedClose {
                        expected: tag.clone(),
                        found: name.to_string(),
                    },
                ));
            }
            (Some(_), true) => {
                let (tag, open_at, start) = open.take().expect("matched Some");
                span_offsets.push(open_at);
                segments.push(Segment::Span {
                    tag,
                    text: text[start..at].to_string(),
                });
                plain_start = close + 1;
            }
        }
        pos = close + 1;
    }
    if let Some((tag, at, _)) = open {
        return Err(MarkupError::at(at, MarkupErrorKind::Unclosed(tag)));
    }
    if plain_start < text.len() {
        segments.push(Segment::Plain {
            text: text[plain_start..].to_string(),
        });
    }

    let spans = segments.iter().filter_map(Segment::tag);
    for (tag, &at) in spans.zip(&span_offsets) {
        if !db.contains(tag) {
            return Err(MarkupError::at(at, MarkupErrorKind::UnknownTag(tag.to_string())));
        }
    }
    Ok(TaggedScript { segments })
}

/// Serializes a script back to markup; inverse of [`parse_markup`].
pub fn to_markup(script: &TaggedScript) -> String {
    let mut out = String::new();
    for seg in &script.segments {
        match seg {
            Segment::Plain { text } => out.push_str(text),
            Segment::Span { tag, text } => {
                out.push('[');
                out.push_str(tag);
                out.push(']');
                out.push_str(text);
                out.push_str("[/");
                out.push_str(tag);
                out.push(']');
            }
        }
    }
    out
}

pub(crate) fn is_punctuation_token(token: &str) -> bool {
    token.chars().all(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':'))
}

/// Collapses whitespace runs to single spaces, trims the ends and attaches
/// tokens made only of punctuation to the preceding word.
pub(crate) fn normalize_spacing(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for token in text.split_whitespace() {
        if !out.is_empty() && !is_punctuation_token(token) {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Spoken text of a script with the spans unwrapped.
pub fn strip_tags(script: &TaggedScript) -> String {
    let joined: String = script.segments.iter().map(Segment::text).collect();
    normalize_spacing(&joined)
}

/// Removes every `[...]` token (and any unmatched `[`) from raw text, then
/// normalizes spacing the same way as [`strip_tags`].
pub fn strip_bracket_tokens(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        rest = match rest[open..].find(']') {
            Some(close) => &rest[open + close + 1..],
            None => &rest[open + 1..],
        };
    }
    out.push_str(rest);
    normalize_spacing(&out)
}
