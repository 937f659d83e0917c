//! Landmark selection, normalization and temporal resampling.
//!
//! The pipeline runs `select_and_drop_z -> [augment] -> normalize -> resample`
//! and yields a fixed `(target_len, 2K)` [`FeatureTensor`], where `K` is the
//! number of selected landmarks. Missing points are carried as `NaN` until
//! normalization imputes them to zero.

mod augment;

pub use augment::{apply_affine, augment, flip_horizontal, Affine, AffineRanges, AugmentConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::landmark::{LandmarkKind, SignSample};

pub const HAND_POINTS: usize = 21;
pub const DEFAULT_TARGET_LEN: usize = 32;
const STD_FLOOR: f64 = 1e-8;

/// Outer and inner lip contour of the 468-point face mesh.
pub const DEFAULT_LIPS: [u32; 40] = [
    0, 13, 14, 17, 37, 39, 40, 61, 78, 80, 81, 82, 84, 87, 88, 91, 95, 146, 178, 181, 185, 191,
    267, 269, 270, 291, 308, 310, 311, 312, 314, 317, 318, 321, 324, 375, 402, 405, 409, 415,
];

/// Shoulders, elbows and wrists.
pub const DEFAULT_POSE: [u32; 6] = [11, 12, 13, 14, 15, 16];

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("sample {0} has no observed coordinates")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid selection spec: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which landmarks feed the model. Both hands are always taken in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub lips: Vec<u32>,
    pub pose: Vec<u32>,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        Self {
            lips: DEFAULT_LIPS.to_vec(),
            pose: DEFAULT_POSE.to_vec(),
        }
    }
}

impl SelectionSpec {
    pub fn new(lips: Vec<u32>, pose: Vec<u32>) -> Result<Self, PreprocessError> {
        let spec = Self { lips, pose };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (name, list, cap) in [
            ("lips", &self.lips, LandmarkKind::Face.capacity()),
            ("pose", &self.pose, LandmarkKind::Pose.capacity()),
        ] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(PreprocessError::Spec(format!("{name} indices must be sorted and unique")));
            }
            if let Some(&bad) = list.iter().find(|&&i| i >= cap) {
                return Err(PreprocessError::Spec(format!("{name} index {bad} >= {cap}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let text = std::fs::read_to_string(path).map_err(|source| PreprocessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: SelectionSpec =
            serde_json::from_str(&text).map_err(|e| PreprocessError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Selected landmark count `K`.
    pub fn num_points(&self) -> usize {
        self.lips.len() + 2 * HAND_POINTS + self.pose.len()
    }

    /// Feature width `D = 2K`.
    pub fn feature_dim(&self) -> usize {
        2 * self.num_points()
    }

    pub fn left_hand_offset(&self) -> usize {
        self.lips.len()
    }

    pub fn right_hand_offset(&self) -> usize {
        self.lips.len() + HAND_POINTS
    }

    pub fn pose_offset(&self) -> usize {
        self.lips.len() + 2 * HAND_POINTS
    }

    /// Output row of a landmark, if selected.
    pub fn row_of(&self, kind: LandmarkKind, index: u32) -> Option<usize> {
        match kind {
            LandmarkKind::Face => self.lips.binary_search(&index).ok(),
            LandmarkKind::LeftHand => {
                ((index as usize) < HAND_POINTS).then(|| self.left_hand_offset() + index as usize)
            }
            LandmarkKind::RightHand => {
                ((index as usize) < HAND_POINTS).then(|| self.right_hand_offset() + index as usize)
            }
            LandmarkKind::Pose => self
                .pose
                .binary_search(&index)
                .ok()
                .map(|i| self.pose_offset() + i),
        }
    }
}

/// Variable-length sequence of frames, each `K` points of `(x, y)`, `NaN` = missing.
#[derive(Debug, Clone)]
pub struct FrameSeq {
    points: usize,
    data: Vec<f32>,
}

impl PartialEq for FrameSeq {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl FrameSeq {
    pub fn new(points: usize, data: Vec<f32>) -> Self {
        assert!(points > 0, "frame must have at least one point");
        assert_eq!(data.len() % (2 * points), 0, "data is not a whole number of frames");
        Self { points, data }
    }

    pub fn from_frames(points: usize, frames: &[Vec<[f32; 2]>]) -> Self {
        let mut data = Vec::with_capacity(frames.len() * points * 2);
        for f in frames {
            assert_eq!(f.len(), points);
            for p in f {
                data.extend_from_slice(p);
            }
        }
        Self::new(points, data)
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.data.len() / (2 * self.points)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_width(&self) -> usize {
        2 * self.points
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let w = self.frame_width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f32] {
        let w = self.frame_width();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn point(&self, frame: usize, point: usize) -> [f32; 2] {
        let f = self.frame(frame);
        [f[2 * point], f[2 * point + 1]]
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn is_missing(&self, frame: usize, point: usize) -> bool {
        let [x, y] = self.point(frame, point);
        x.is_nan() || y.is_nan()
    }
}

/// Fixed-shape `(frames, dim)` model input, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(frames: usize, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(frames * dim, data.len(), "feature tensor shape/data mismatch");
        Self { frames, dim, data }
    }

    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self::new(frames, dim, vec![0.0; frames * dim])
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.dim)
    }
}

/// Picks the selected landmarks per frame and discards depth.
///
/// Rows are ordered lips, left hand, right hand, pose, each by ascending
/// landmark index. One output frame is produced per distinct frame index.
pub fn select_and_drop_z(sample: &SignSample, spec: &SelectionSpec) -> FrameSeq {
    let k = spec.num_points();
    let mut data: Vec<f32> = Vec::new();
    let mut current: Option<u32> = None;
    for lf in &sample.frames {
        if current != Some(lf.frame) {
            current = Some(lf.frame);
            data.extend(std::iter::repeat_n(f32::NAN, 2 * k));
        }
        if let Some(row) = spec.row_of(lf.kind, lf.landmark_index) {
            let base = data.len() - 2 * k + 2 * row;
            if lf.is_missing() {
                data[base] = f32::NAN;
                data[base + 1] = f32::NAN;
            } else {
                data[base] = lf.x;
                data[base + 1] = lf.y;
            }
        }
    }
    FrameSeq::new(k, data)
}

/// Standardizes all observed x and y values of the sample jointly, then
/// imputes missing entries to zero.
pub fn normalize(frames: &FrameSeq) -> Result<FrameSeq, PreprocessError> {
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for pair in frames.values().chunks_exact(2) {
        if !(pair[0].is_nan() || pair[1].is_nan()) {
            sum += pair[0] as f64 + pair[1] as f64;
            n += 2;
        }
    }
    if n == 0 {
        return Err(PreprocessError::Degenerate("input".into()));
    }
    let mean = sum / n as f64;
    let mut sq = 0.0f64;
    for pair in frames.values().chunks_exact(2) {
        if !(pair[0].is_nan() || pair[1].is_nan()) {
            sq += (pair[0] as f64 - mean).powi(2) + (pair[1] as f64 - mean).powi(2);
        }
    }
    let mut std = (sq / n as f64).sqrt();
    if std < STD_FLOOR {
        std = 1.0;
    }
    let mut out = frames.clone();
    for pair in out.values_mut().chunks_exact_mut(2) {
        if pair[0].is_nan() || pair[1].is_nan() {
            pair[0] = 0.0;
            pair[1] = 0.0;
        } else {
            pair[0] = ((pair[0] as f64 - mean) / std) as f32;
            pair[1] = ((pair[1] as f64 - mean) / std) as f32;
        }
    }
    Ok(out)
}

/// Linear interpolation of frame `pos` (fractional) where a zero weight
/// never reads the neighbour, so `NaN` only spreads where it contributes.
fn interpolate_into(frames: &FrameSeq, pos: f64, out: &mut Vec<f32>) {
    let last = frames.len() - 1;
    let lo = (pos.floor() as usize).min(last);
    let hi = (lo + 1).min(last);
    let frac = pos - lo as f64;
    if frac == 0.0 || lo == hi {
        out.extend_from_slice(frames.frame(lo));
        return;
    }
    let a = frames.frame(lo);
    let b = frames.frame(hi);
    out.extend(
        a.iter()
            .zip(b)
            .map(|(&a, &b)| (a as f64 + (b as f64 - a as f64) * frac) as f32),
    );
}

/// Resamples to `target_len` frames placed uniformly over `[0, L-1]`.
fn resample_seq(frames: &FrameSeq, target_len: usize) -> FrameSeq {
    let len = frames.len();
    if len == target_len {
        return frames.clone();
    }
    let mut data = Vec::with_capacity(target_len * frames.frame_width());
    for i in 0..target_len {
        let pos = if target_len == 1 {
            0.0
        } else {
            i as f64 * (len - 1) as f64 / (target_len - 1) as f64
        };
        interpolate_into(frames, pos, &mut data);
    }
    FrameSeq::new(frames.num_points(), data)
}

pub(crate) fn resample_frames(frames: &FrameSeq, target_len: usize) -> FrameSeq {
    resample_seq(frames, target_len)
}

pub fn resample(frames: &FrameSeq, target_len: usize) -> Result<FeatureTensor, PreprocessError> {
    if target_len == 0 {
        return Err(PreprocessError::Argument("target_len must be positive".into()));
    }
    if frames.is_empty() {
        return Err(PreprocessError::Argument("cannot resample an empty sequence".into()));
    }
    let out = resample_seq(frames, target_len);
    let dim = out.frame_width();
    Ok(FeatureTensor::new(target_len, dim, out.data))
}

/// Full preprocessing of one sample. Flips happen on raw coordinates, before
/// normalization.
pub fn preprocess_pipeline(
    sample: &SignSample,
    spec: &SelectionSpec,
    target_len: usize,
    cfg: Option<&AugmentConfig>,
) -> Result<FeatureTensor, PreprocessError> {
    let mut frames = select_and_drop_z(sample, spec);
    if let Some(cfg) = cfg {
        frames = augment(&frames, spec, cfg)?;
    }
    let frames = normalize(&frames).map_err(|e| match e {
        PreprocessError::Degenerate(_) => PreprocessError::Degenerate(sample.sample_id.clone()),
        other => other,
    })?;
    resample(&frames, target_len)
}
