//! Word-rate speech timing with gestures anchored to their span's first word.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::markup::{is_punctuation_token, normalize_spacing};
use super::{DescriptorDb, GestureError, Segment, TaggedScript};

pub const DEFAULT_WPM: f64 = 150.0;

/// Grace period before a gesture outlasting its words is reported.
pub const OVERRUN_SLACK_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineEvent {
    Speech {
        text: String,
        start_s: f64,
        duration_s: f64,
    },
    Gesture {
        tag: String,
        start_s: f64,
        duration_s: f64,
        body_parts: Vec<String>,
    },
}

impl TimelineEvent {
    pub fn start_s(&self) -> f64 {
        match self {
            Self::Speech { start_s, .. } | Self::Gesture { start_s, .. } => *start_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            Self::Speech { duration_s, .. } | Self::Gesture { duration_s, .. } => *duration_s,
        }
    }

    pub fn end_s(&self) -> f64 {
        self.start_s() + self.duration_s()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineWarning {
    Overrun {
        tag: String,
        playtime_s: f64,
        speech_s: f64,
    },
    Conflict {
        first: String,
        second: String,
        body_parts: Vec<String>,
    },
}

impl fmt::Display for TimelineWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Overrun {
                tag,
                playtime_s,
                speech_s,
            } => write!(
                f,
                "gesture {tag} plays {playtime_s:.2}s but its words last {speech_s:.2}s"
            ),
            Self::Conflict {
                first,
                second,
                body_parts,
            } => write!(f, "gestures {first} and {second} overlap on {}", body_parts.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
    pub warnings: Vec<TimelineWarning>,
}

impl Timeline {
    /// End of the last event.
    pub fn total_s(&self) -> f64 {
        self.events.iter().map(TimelineEvent::end_s).fold(0.0, f64::max)
    }

    pub fn speech_duration_s(&self) -> f64 {
        self.events
            .iter()
            .filter(|e| matches!(e, TimelineEvent::Speech { .. }))
            .map(TimelineEvent::duration_s)
            .sum()
    }

    pub fn gestures(&self) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(|e| matches!(e, TimelineEvent::Gesture { .. }))
    }
}

/// Lays out speech at `60 / wpm` seconds per word and starts each gesture
/// with the first word of its span. Punctuation-only tokens take no time.
/// Speech is never delayed; overruns and body-part conflicts are reported
/// as warnings.
pub fn schedule(script: &TaggedScript, db: &DescriptorDb, speech_rate_wpm: f64) -> Result<Timeline, GestureError> {
    if !(speech_rate_wpm > 0.0 && speech_rate_wpm.is_finite()) {
        return Err(GestureError::SpeechRate(speech_rate_wpm));
    }
    let per_word = 60.0 / speech_rate_wpm;
    let mut timeline = Timeline::default();
    let mut word_index = 0usize;
    let mut gestures: Vec<(usize, &super::GestureDescriptor)> = Vec::new();

    for seg in &script.segments {
        let tokens: Vec<&str> = seg.text().split_whitespace().collect();
        // punctuation right after a closing tag belongs to the words before it
        let lead = tokens.iter().take_while(|t| is_punctuation_token(t)).count();
        if lead > 0 {
            if let Some(TimelineEvent::Speech { text, .. }) =
                timeline.events.iter_mut().rev().find(|e| matches!(e, TimelineEvent::Speech { .. }))
            {
                text.push_str(&tokens[..lead].concat());
            }
        }
        let words = &tokens[lead..];
        let num_words = words.iter().filter(|t| !is_punctuation_token(t)).count();
        let start_s = word_index as f64 * per_word;
        let speech_s = num_words as f64 * per_word;
        if let Segment::Span { tag, .. } = seg {
            let d = db.get(tag).ok_or_else(|| GestureError::UnknownTag(tag.clone()))?;
            if d.playtime_s > speech_s + OVERRUN_SLACK_S {
                timeline.warnings.push(TimelineWarning::Overrun {
                    tag: tag.clone(),
                    playtime_s: d.playtime_s,
                    speech_s,
                });
            }
            gestures.push((timeline.events.len(), d));
            timeline.events.push(TimelineEvent::Gesture {
                tag: tag.clone(),
                start_s,
                duration_s: d.playtime_s,
                body_parts: d.body_parts.clone(),
            });
        }
        if num_words > 0 {
            timeline.events.push(TimelineEvent::Speech {
                text: normalize_spacing(&words.join(" ")),
                start_s,
                duration_s: speech_s,
            });
        }
        word_index += num_words;
    }

    for (i, &(ei, a)) in gestures.iter().enumerate() {
        for &(ej, b) in &gestures[i + 1..] {
            let (ea, eb) = (&timeline.events[ei], &timeline.events[ej]);
            let overlap = ea.start_s() < eb.end_s() && eb.start_s() < ea.end_s();
            if !overlap {
                continue;
            }
            let shared: Vec<String> = a.body_parts.iter().filter(|p| b.body_parts.contains(p)).cloned().collect();
            if !shared.is_empty() {
                timeline.warnings.push(TimelineWarning::Conflict {
                    first: a.tag.clone(),
                    second: b.tag.clone(),
                    body_parts: shared,
                });
            }
        }
    }

    timeline.events.sort_by(|a, b| a.start_s().total_cmp(&b.start_s()));
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{parse_markup, GestureDescriptor};

    fn db() -> DescriptorDb {
        let d = |tag: &str, playtime_s: f64, parts: &[&str]| GestureDescriptor {
            tag: tag.into(),
            description: String::new(),
            playtime_s,
            body_parts: parts.iter().map(|s| s.to_string()).collect(),
        };
        DescriptorDb::new(vec![
            d("Thinking", 2.17, &["Eyes", "Neck", "Right Arm", "Right Hand"]),
            d("Wave", 1.0, &["Left Arm", "Left Hand"]),
            d("Point", 1.0, &["Right Arm"]),
        ])
        .unwrap()
    }

    #[test]
    fn thinking_over_three_words_overruns() {
        let db = db();
        let script = parse_markup("[Thinking] let me see [/Thinking]", &db).unwrap();
        let t = schedule(&script, &db, 150.0).unwrap();
        assert_eq!(
            t.events[0],
            TimelineEvent::Gesture {
                tag: "Thinking".into(),
                start_s: 0.0,
                duration_s: 2.17,
                body_parts: vec!["Eyes".into(), "Neck".into(), "Right Arm".into(), "Right Hand".into()],
            }
        );
        assert!((t.speech_duration_s() - 1.2).abs() < 1e-9);
        assert_eq!(t.warnings.len(), 1);
        assert!(matches!(&t.warnings[0], TimelineWarning::Overrun { tag, .. } if tag == "Thinking"));
    }

    #[test]
    fn no_spans_no_warnings() {
        let t = schedule(&TaggedScript::plain("one two three four"), &db(), 120.0).unwrap();
        assert_eq!(t.events.len(), 1);
        assert!(t.warnings.is_empty());
        assert_eq!(t.total_s(), 2.0);
    }

    #[test]
    fn disjoint_parts_do_not_conflict() {
        let db = db();
        let script = parse_markup("[Wave] hi [/Wave][Point] there [/Point]", &db).unwrap();
        let t = schedule(&script, &db, 150.0).unwrap();
        // Wave [0, 1.0) overlaps Point [0.4, 1.4)
        assert!(t.warnings.iter().all(|w| !matches!(w, TimelineWarning::Conflict { .. })));
    }

    #[test]
    fn shared_part_overlap_conflicts() {
        let db = db();
        let script = parse_markup("[Thinking] a [/Thinking] [Point] b c d e f g [/Point]", &db).unwrap();
        let t = schedule(&script, &db, 150.0).unwrap();
        let conflict = t.warnings.iter().find_map(|w| match w {
            TimelineWarning::Conflict { body_parts, .. } => Some(body_parts.clone()),
            _ => None,
        });
        assert_eq!(conflict, Some(vec!["Right Arm".to_string()]));
    }

    #[test]
    fn events_sorted_and_rate_checked() {
        let db = db();
        let script = parse_markup("x y [Wave] z [/Wave] w", &db).unwrap();
        let t = schedule(&script, &db, 60.0).unwrap();
        let starts: Vec<f64> = t.events.iter().map(TimelineEvent::start_s).collect();
        assert_eq!(starts, [0.0, 2.0, 2.0, 3.0]);
        assert!(schedule(&script, &db, 0.0).is_err());
        assert!(schedule(&script, &db, f64::NAN).is_err());
        let unknown = TaggedScript {
            segments: vec![Segment::Span {
                tag: "Missing".into(),
                text: "x".into(),
            }],
        };
        assert!(matches!(schedule(&unknown, &db, 150.0), Err(GestureError::UnknownTag(_))));
    }
}
