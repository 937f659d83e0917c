//! Landmark records, labeled sign samples and the portable CSV corpus format.
//!
//! A corpus file is UTF-8 CSV with the header
//! `sample_id,frame,kind,landmark_index,x,y,z,label`. Missing coordinates are
//! empty fields on disk and `NaN` in memory. Labels are repeated on every row
//! of a sample and left empty for unlabeled data.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Size of the sign lexicon.
pub const NUM_CLASSES: usize = 250;

pub const CORPUS_HEADER: [&str; 8] = [
    "sample_id",
    "frame",
    "kind",
    "landmark_index",
    "x",
    "y",
    "z",
    "label",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("invalid sample {sample_id}: {message}")]
    InvalidSample { sample_id: String, message: String },
}

/// Which holistic landmark group a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    Face,
    LeftHand,
    Pose,
    RightHand,
}

impl LandmarkKind {
    pub const ALL: [LandmarkKind; 4] = [
        LandmarkKind::Face,
        LandmarkKind::LeftHand,
        LandmarkKind::Pose,
        LandmarkKind::RightHand,
    ];

    /// Number of landmarks the estimator emits for this group.
    pub fn capacity(self) -> u32 {
        match self {
            LandmarkKind::Face => 468,
            LandmarkKind::Pose => 33,
            LandmarkKind::LeftHand | LandmarkKind::RightHand => 21,
        }
    }

    /// Stable serialization code.
    pub fn code(self) -> u8 {
        match self {
            LandmarkKind::Face => 0,
            LandmarkKind::LeftHand => 1,
            LandmarkKind::Pose => 2,
            LandmarkKind::RightHand => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkKind::Face => "face",
            LandmarkKind::LeftHand => "left_hand",
            LandmarkKind::Pose => "pose",
            LandmarkKind::RightHand => "right_hand",
        }
    }
}

impl fmt::Display for LandmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face" => Ok(LandmarkKind::Face),
            "left_hand" => Ok(LandmarkKind::LeftHand),
            "pose" => Ok(LandmarkKind::Pose),
            "right_hand" => Ok(LandmarkKind::RightHand),
            other => Err(format!("unknown landmark kind `{other}`")),
        }
    }
}

/// One landmark observation. Missing coordinates are `NaN`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub frame: u32,
    pub kind: LandmarkKind,
    #[serde(rename = "index")]
    pub landmark_index: u32,
    #[serde(with = "nan_as_null")]
    pub x: f32,
    #[serde(with = "nan_as_null")]
    pub y: f32,
    #[serde(with = "nan_as_null")]
    pub z: f32,
}

fn same_coord(a: f32, b: f32) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for LandmarkFrame {
    fn eq(&self, other: &Self) -> bool {
        self.frame == other.frame
            && self.kind == other.kind
            && self.landmark_index == other.landmark_index
            && same_coord(self.x, other.x)
            && same_coord(self.y, other.y)
            && same_coord(self.z, other.z)
    }
}

impl LandmarkFrame {
    pub fn new(frame: u32, kind: LandmarkKind, landmark_index: u32, x: f32, y: f32, z: f32) -> Self {
        Self {
            frame,
            kind,
            landmark_index,
            x,
            y,
            z,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.x.is_nan() || self.y.is_nan()
    }

    fn check_bounds(&self) -> Result<(), String> {
        if self.landmark_index >= self.kind.capacity() {
            return Err(format!(
                "landmark_index {} out of range for {} (capacity {})",
                self.landmark_index,
                self.kind,
                self.kind.capacity()
            ));
        }
        for (name, v) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if v.is_infinite() {
                return Err(format!("{name} is not finite"));
            }
        }
        Ok(())
    }
}

mod nan_as_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f32, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f32, D::Error> {
        Ok(Option::<f32>::deserialize(d)?.unwrap_or(f32::NAN))
    }
}

/// A labeled (or unlabeled) sequence of landmark rows for one sign clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSample {
    pub sample_id: String,
    pub frames: Vec<LandmarkFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
}

impl SignSample {
    pub fn new(sample_id: impl Into<String>, frames: Vec<LandmarkFrame>, label: Option<u32>) -> Self {
        Self {
            sample_id: sample_id.into(),
            frames,
            label,
        }
    }

    /// Checks ordering, bounds and label range.
    pub fn validate(&self, num_classes: usize) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::InvalidSample {
            sample_id: self.sample_id.clone(),
            message,
        };
        if self.frames.is_empty() {
            return Err(invalid("sample has no frames".into()));
        }
        for pair in self.frames.windows(2) {
            if pair[1].frame < pair[0].frame {
                return Err(invalid(format!(
                    "frame index decreases from {} to {}",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        for f in &self.frames {
            f.check_bounds().map_err(invalid)?;
        }
        if let Some(label) = self.label {
            if label as usize >= num_classes {
                return Err(invalid(format!("label {label} >= {num_classes}")));
            }
        }
        Ok(())
    }

    /// Number of distinct frame indices.
    pub fn num_frames(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for f in &self.frames {
            if last != Some(f.frame) {
                n += 1;
                last = Some(f.frame);
            }
        }
        n
    }

    pub fn without_label(&self) -> SignSample {
        SignSample {
            label: None,
            ..self.clone()
        }
    }
}

/// Bijective class id <-> gloss mapping with dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    glosses: Vec<String>,
    ids: HashMap<String, u32>,
}

impl LabelMap {
    pub fn new(glosses: Vec<String>) -> Result<Self, String> {
        let mut ids = HashMap::with_capacity(glosses.len());
        for (i, g) in glosses.iter().enumerate() {
            if g.is_empty() {
                return Err(format!("empty gloss for class {i}"));
            }
            if ids.insert(g.clone(), i as u32).is_some() {
                return Err(format!("duplicate gloss `{g}`"));
            }
        }
        Ok(Self { glosses, ids })
    }

    /// `class_000`, `class_001`, ... for when no gloss list is available.
    pub fn placeholder(num_classes: usize) -> Self {
        Self::new((0..num_classes).map(|i| format!("class_{i:03}")).collect())
            .expect("placeholder names are unique")
    }

    /// Reads a JSON array of gloss strings; position is the class id.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let glosses: Vec<String> = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        Self::new(glosses).map_err(|message| CorpusError::Validation { line: 0, message })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let text = serde_json::to_string_pretty(&self.glosses).expect("string list serializes");
        std::fs::write(path, text).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.glosses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glosses.is_empty()
    }

    pub fn gloss(&self, id: u32) -> Option<&str> {
        self.glosses.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, gloss: &str) -> Option<u32> {
        self.ids.get(gloss).copied()
    }

    pub fn glosses(&self) -> &[String] {
        &self.glosses
    }
}

fn parse_coord(field: &str, name: &str, line: u64) -> Result<f32, CorpusError> {
    if field.is_empty() {
        return Ok(f32::NAN);
    }
    let v: f32 = field.parse().map_err(|_| CorpusError::Parse {
        line,
        message: format!("invalid {name} value `{field}`"),
    })?;
    if v.is_nan() {
        // NaN is only spelled as an empty field
        return Err(CorpusError::Parse {
            line,
            message: format!("invalid {name} value `{field}`"),
        });
    }
    Ok(v)
}

fn parse_int<T: FromStr>(field: &str, name: &str, line: u64) -> Result<T, CorpusError> {
    field.parse().map_err(|_| CorpusError::Parse {
        line,
        message: format!("invalid {name} `{field}`"),
    })
}

/// Parses corpus CSV from any reader. See [`read_corpus`].
pub fn parse_corpus<R: Read>(reader: R) -> Result<Vec<SignSample>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => {
            return Err(CorpusError::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some(Err(e)) => {
            return Err(CorpusError::Parse {
                line: 1,
                message: e.to_string(),
            })
        }
        Some(Ok(header)) => {
            let fields: Vec<&str> = header.iter().map(str::trim).collect();
            if fields != CORPUS_HEADER {
                return Err(CorpusError::Parse {
                    line: 1,
                    message: format!("expected header `{}`", CORPUS_HEADER.join(",")),
                });
            }
        }
    }

    let mut samples: Vec<SignSample> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    // first line each sample was seen on, for positioned label errors
    let mut label_line: Vec<u64> = Vec::new();

    for record in records {
        let record = record.map_err(|e| CorpusError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CORPUS_HEADER.len() {
            return Err(CorpusError::Parse {
                line,
                message: format!("expected {} fields, found {}", CORPUS_HEADER.len(), record.len()),
            });
        }
        let sample_id = &record[0];
        if sample_id.is_empty() {
            return Err(CorpusError::Parse {
                line,
                message: "empty sample_id".into(),
            });
        }
        let frame: u32 = parse_int(&record[1], "frame", line)?;
        let kind: LandmarkKind = record[2]
            .parse()
            .map_err(|message| CorpusError::Parse { line, message })?;
        let landmark_index: u32 = parse_int(&record[3], "landmark_index", line)?;
        let x = parse_coord(&record[4], "x", line)?;
        let y = parse_coord(&record[5], "y", line)?;
        let z = parse_coord(&record[6], "z", line)?;
        let label: Option<u32> = match &record[7] {
            "" => None,
            s => Some(parse_int(s, "label", line)?),
        };

        let lf = LandmarkFrame::new(frame, kind, landmark_index, x, y, z);
        lf.check_bounds()
            .map_err(|message| CorpusError::Validation { line, message })?;
        if let Some(l) = label {
            if l as usize >= NUM_CLASSES {
                return Err(CorpusError::Validation {
                    line,
                    message: format!("label {l} >= {NUM_CLASSES}"),
                });
            }
        }

        let idx = match by_id.get(sample_id) {
            Some(&i) => i,
            None => {
                by_id.insert(sample_id.to_string(), samples.len());
                samples.push(SignSample::new(sample_id, Vec::new(), label));
                label_line.push(line);
                samples.len() - 1
            }
        };
        let sample = &mut samples[idx];
        if sample.label != label {
            return Err(CorpusError::Validation {
                line,
                message: format!(
                    "label for sample {} disagrees with line {}",
                    sample.sample_id, label_line[idx]
                ),
            });
        }
        if let Some(prev) = sample.frames.last() {
            if frame < prev.frame {
                return Err(CorpusError::Validation {
                    line,
                    message: format!("frame index decreases from {} to {frame}", prev.frame),
                });
            }
        }
        sample.frames.push(lf);
    }
    Ok(samples)
}

/// Reads a corpus file, grouping rows by `sample_id` in first-seen order.
pub fn read_corpus(path: &Path) -> Result<Vec<SignSample>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(io::BufReader::new(file))
}

fn fmt_coord(v: f32) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Display prints the shortest representation that round-trips
        v.to_string()
    }
}

pub fn serialize_corpus<W: Write>(samples: &[SignSample], writer: W) -> Result<(), io::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CORPUS_HEADER)?;
    for s in samples {
        let label = s.label.map(|l| l.to_string()).unwrap_or_default();
        for f in &s.frames {
            wtr.write_record([
                s.sample_id.as_str(),
                &f.frame.to_string(),
                f.kind.as_str(),
                &f.landmark_index.to_string(),
                &fmt_coord(f.x),
                &fmt_coord(f.y),
                &fmt_coord(f.z),
                &label,
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_corpus(samples: &[SignSample], path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    for s in samples {
        s.validate(NUM_CLASSES)?;
    }
    let file = File::create(path).map_err(io_err)?;
    serialize_corpus(samples, io::BufWriter::new(file)).map_err(io_err)
}
