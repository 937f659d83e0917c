//! Robot gesture descriptors, the bracketed co-speech markup and the
//! speech/gesture timeline.

mod markup;
mod timeline;

pub use markup::{parse_markup, strip_bracket_tokens, strip_tags, to_markup, MarkupError, MarkupErrorKind, Segment, TaggedScript};
pub use timeline::{schedule, Timeline, TimelineEvent, TimelineWarning, DEFAULT_WPM, OVERRUN_SLACK_S};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Descriptor database shipped with the crate.
pub const SAMPLE_DB_JSON: &str = include_str!("../../assets/gestures.json");

#[derive(Debug, thiserror::Error)]
pub enum GestureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed descriptor JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid descriptor `{tag}`: {message}")]
    Validation { tag: String, message: String },
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error("gesture `{0}` is not in the descriptor database")]
    UnknownTag(String),
    #[error("speech rate must be a positive number of words per minute, got {0}")]
    SpeechRate(f64),
    #[error("playtime statistics need at least one gesture")]
    EmptyDatabase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureDescriptor {
    pub tag: String,
    pub description: String,
    pub playtime_s: f64,
    pub body_parts: Vec<String>,
}

/// True if `tag` can appear between brackets in markup.
pub fn is_valid_tag(tag: &str) -> bool {
    !tag.is_empty() && !tag.chars().any(|c| c.is_whitespace() || matches!(c, '[' | ']' | '/'))
}

impl GestureDescriptor {
    pub fn validate(&self) -> Result<(), GestureError> {
        let fail = |message: &str| {
            Err(GestureError::Validation {
                tag: self.tag.clone(),
                message: message.to_string(),
            })
        };
        if !is_valid_tag(&self.tag) {
            return fail("tag must be non-empty without whitespace, brackets or '/'");
        }
        if !(self.playtime_s > 0.0 && self.playtime_s.is_finite()) {
            return fail(&format!("playtime must be positive, got {}", self.playtime_s));
        }
        if self.body_parts.is_empty() {
            return fail("body_parts must not be empty");
        }
        for (i, part) in self.body_parts.iter().enumerate() {
            if part.trim().is_empty() {
                return fail("body part names must not be blank");
            }
            if self.body_parts[..i].contains(part) {
                return fail(&format!("body part `{part}` listed twice"));
            }
        }
        Ok(())
    }

    pub fn shares_body_part(&self, other: &GestureDescriptor) -> bool {
        self.body_parts.iter().any(|p| other.body_parts.contains(p))
    }
}

/// Validated, insertion-ordered descriptor collection with unique tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorDb {
    entries: Vec<GestureDescriptor>,
    index: HashMap<String, usize>,
}

impl DescriptorDb {
    pub fn new(entries: Vec<GestureDescriptor>) -> Result<Self, GestureError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, d) in entries.iter().enumerate() {
            d.validate()?;
            if index.insert(d.tag.clone(), i).is_some() {
                return Err(GestureError::Validation {
                    tag: d.tag.clone(),
                    message: "duplicate tag".into(),
                });
            }
        }
        Ok(Self { entries, index })
    }

    pub fn from_json(json: &str) -> Result<Self, GestureError> {
        Self::new(serde_json::from_str(json)?)
    }

    pub fn sample() -> Self {
        Self::from_json(SAMPLE_DB_JSON).expect("bundled descriptor database is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("descriptors serialize")
    }

    pub fn get(&self, tag: &str) -> Option<&GestureDescriptor> {
        self.index.get(tag).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains_key(tag)
    }

    pub fn entries(&self) -> &[GestureDescriptor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_descriptors(path: &Path) -> Result<DescriptorDb, GestureError> {
    let text = fs::read_to_string(path).map_err(|source| GestureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DescriptorDb::from_json(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaytimeStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

impl PlaytimeStats {
    pub const FIELDS: [&'static str; 7] = ["mean", "std", "min", "p25", "p50", "p75", "max"];

    pub fn values(&self) -> [f64; 7] {
        [self.mean, self.std, self.min, self.p25, self.p50, self.p75, self.max]
    }

    /// Sample (n-1) standard deviation and linearly interpolated quantiles.
    pub fn from_values(values: &[f64]) -> Result<Self, GestureError> {
        if values.is_empty() {
            return Err(GestureError::EmptyDatabase);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let std = if sorted.len() < 2 {
            0.0
        } else {
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self {
            mean,
            std,
            min: sorted[0],
            p25: quantile(&sorted, 0.25),
            p50: quantile(&sorted, 0.50),
            p75: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Linear interpolation between closest ranks at position `q * (n - 1)`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn playtime_stats(db: &DescriptorDb) -> Result<PlaytimeStats, GestureError> {
    let values: Vec<f64> = db.entries().iter().map(|d| d.playtime_s).collect();
    PlaytimeStats::from_values(&values)
}
