//! Training-time augmentation: temporal resampling and frame masking, then
//! horizontal flips and a random affine map on raw coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{resample_frames, FrameSeq, PreprocessError, SelectionSpec};

/// Mirror pairs of the 33-point pose model.
const POSE_MIRROR_PAIRS: [(u32, u32); 16] = [
    (1, 4),
    (2, 5),
    (3, 6),
    (7, 8),
    (9, 10),
    (11, 12),
    (13, 14),
    (15, 16),
    (17, 18),
    (19, 20),
    (21, 22),
    (23, 24),
    (25, 26),
    (27, 28),
    (29, 30),
    (31, 32),
];

/// Sampling ranges for the spatial affine map. `[lo, hi]` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRanges {
    pub scale: [f32; 2],
    pub shift: [f32; 2],
    pub rotate_deg: [f32; 2],
    pub shear: [f32; 2],
}

impl AffineRanges {
    pub fn identity() -> Self {
        Self {
            scale: [1.0, 1.0],
            shift: [0.0, 0.0],
            rotate_deg: [0.0, 0.0],
            shear: [0.0, 0.0],
        }
    }
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            scale: [0.8, 1.2],
            shift: [-0.1, 0.1],
            rotate_deg: [-15.0, 15.0],
            shear: [-0.15, 0.15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub resample_scale_range: [f32; 2],
    pub mask_prob: f32,
    pub flip_prob: f32,
    #[serde(default)]
    pub affine: AffineRanges,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            resample_scale_range: [0.8, 1.2],
            mask_prob: 0.1,
            flip_prob: 0.5,
            affine: AffineRanges::default(),
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every stage disabled; `augment` returns its input unchanged.
    pub fn identity(rng_seed: u64) -> Self {
        Self {
            resample_scale_range: [1.0, 1.0],
            mask_prob: 0.0,
            flip_prob: 0.0,
            affine: AffineRanges::identity(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let ranges = [
            ("resample_scale_range", self.resample_scale_range),
            ("affine.scale", self.affine.scale),
            ("affine.shift", self.affine.shift),
            ("affine.rotate_deg", self.affine.rotate_deg),
            ("affine.shear", self.affine.shear),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(PreprocessError::Argument(format!("{name}: need finite lo <= hi")));
            }
        }
        if self.resample_scale_range[0] <= 0.0 {
            return Err(PreprocessError::Argument("resample_scale_range must be positive".into()));
        }
        for (name, p) in [("mask_prob", self.mask_prob), ("flip_prob", self.flip_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PreprocessError::Argument(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// 2x2 linear part plus translation, applied as `p' = M p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub matrix: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        matrix: [[1.0, 0.0], [0.0, 1.0]],
        translation: [0.0, 0.0],
    };

    /// `rotate(deg) * shear_x(shear) * scale`, then shift.
    pub fn compose(scale: f64, rotate_deg: f64, shear: f64, shift: [f64; 2]) -> Self {
        let (s, c) = rotate_deg.to_radians().sin_cos();
        Self {
            matrix: [
                [scale * c, scale * (c * shear - s)],
                [scale * s, scale * (s * shear + c)],
            ],
            translation: shift,
        }
    }

    pub fn apply(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] * x + m[0][1] * y + self.translation[0],
            m[1][0] * x + m[1][1] * y + self.translation[1],
        ]
    }
}

/// Applies `affine` to every observed point; missing points stay missing.
pub fn apply_affine(frames: &FrameSeq, affine: &Affine) -> FrameSeq {
    let mut out = frames.clone();
    for p in out.values_mut().chunks_exact_mut(2) {
        if p[0].is_nan() || p[1].is_nan() {
            continue;
        }
        let [x, y] = affine.apply([p[0] as f64, p[1] as f64]);
        p[0] = x as f32;
        p[1] = y as f32;
    }
    out
}

fn swap_points(frame: &mut [f32], a: usize, b: usize) {
    frame.swap(2 * a, 2 * b);
    frame.swap(2 * a + 1, 2 * b + 1);
}

/// Mirrors `x -> 1 - x` and swaps left/right hand blocks and mirrored pose
/// points. Applying it twice is the identity up to f32 rounding of `1 - x`.
pub fn flip_horizontal(frames: &FrameSeq, spec: &SelectionSpec) -> FrameSeq {
    let mut out = frames.clone();
    let lh = spec.left_hand_offset();
    let rh = spec.right_hand_offset();
    let pose_pairs: Vec<(usize, usize)> = POSE_MIRROR_PAIRS
        .iter()
        .filter_map(|&(a, b)| {
            let ia = spec.pose.binary_search(&a).ok()?;
            let ib = spec.pose.binary_search(&b).ok()?;
            Some((spec.pose_offset() + ia, spec.pose_offset() + ib))
        })
        .collect();
    for t in 0..out.len() {
        let frame = out.frame_mut(t);
        for p in frame.chunks_exact_mut(2) {
            p[0] = 1.0 - p[0];
        }
        for i in 0..super::HAND_POINTS {
            swap_points(frame, lh + i, rh + i);
        }
        for &(a, b) in &pose_pairs {
            swap_points(frame, a, b);
        }
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f32; 2]) -> f64 {
    if lo == hi {
        lo as f64
    } else {
        rng.random_range(lo as f64..hi as f64)
    }
}

/// Seeded augmentation. Output depends only on `frames`, `spec` and `cfg`.
pub fn augment(frames: &FrameSeq, spec: &SelectionSpec, cfg: &AugmentConfig) -> Result<FrameSeq, PreprocessError> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(PreprocessError::Argument("cannot augment an empty sequence".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let u = uniform(&mut rng, cfg.resample_scale_range);
    let new_len = ((frames.len() as f64 * u).round() as usize).max(1);
    let mut out = resample_frames(frames, new_len);

    for t in 0..out.len() {
        if rng.random_bool(cfg.mask_prob as f64) {
            out.frame_mut(t).fill(f32::NAN);
        }
    }

    if rng.random_bool(cfg.flip_prob as f64) {
        out = flip_horizontal(&out, spec);
    }

    let a = &cfg.affine;
    let scale = uniform(&mut rng, a.scale);
    let rotate = uniform(&mut rng, a.rotate_deg);
    let shear = uniform(&mut rng, a.shear);
    let shift = [uniform(&mut rng, a.shift), uniform(&mut rng, a.shift)];
    let affine = Affine::compose(scale, rotate, shear, shift);
    if affine != Affine::IDENTITY {
        out = apply_affine(&out, &affine);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SelectionSpec {
        SelectionSpec::new(vec![0, 13], vec![11, 12, 13, 14, 15, 16]).unwrap()
    }

    fn ramp(spec: &SelectionSpec, frames: usize) -> FrameSeq {
        let k = spec.num_points();
        let data = (0..frames * k * 2).map(|i| (i % 97) as f32 / 97.0).collect();
        FrameSeq::new(k, data)
    }

    #[test]
    fn identity_config_is_identity() {
        let s = spec();
        let seq = ramp(&s, 7);
        let out = augment(&seq, &s, &AugmentConfig::identity(42)).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn flip_reflects_and_swaps_hands() {
        let s = spec();
        let k = s.num_points();
        let mut data = vec![f32::NAN; 2 * k];
        let lh = s.left_hand_offset();
        data[2 * lh] = 0.3;
        data[2 * lh + 1] = 0.4;
        let seq = FrameSeq::new(k, data);
        let mut cfg = AugmentConfig::identity(1);
        cfg.flip_prob = 1.0;
        let out = augment(&seq, &s, &cfg).unwrap();
        let [x, y] = out.point(0, s.right_hand_offset());
        assert!((x - 0.7).abs() < 1e-6);
        assert_eq!(y, 0.4);
        assert!(out.is_missing(0, lh));
    }

    #[test]
    fn flip_swaps_pose_pairs() {
        let s = spec();
        let seq = ramp(&s, 1);
        let out = flip_horizontal(&seq, &s);
        let po = s.pose_offset();
        // (11, 12) occupy pose rows 0 and 1
        assert_eq!(out.point(0, po)[1], seq.point(0, po + 1)[1]);
        assert_eq!(out.point(0, po + 1)[1], seq.point(0, po)[1]);
        let back = flip_horizontal(&out, &s);
        for (a, b) in back.values().iter().zip(seq.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn rotation_by_90_degrees() {
        let a = Affine::compose(1.0, 90.0, 0.0, [0.0, 0.0]);
        let [x, y] = a.apply([1.0, 0.0]);
        assert!(x.abs() < 1e-6 && (y - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shear_and_scale_compose() {
        let a = Affine::compose(2.0, 0.0, 0.5, [1.0, -1.0]);
        assert_eq!(a.apply([1.0, 2.0]), [2.0 * (1.0 + 0.5 * 2.0) + 1.0, 2.0 * 2.0 - 1.0]);
    }

    #[test]
    fn masking_everything_blanks_frames() {
        let s = spec();
        let mut cfg = AugmentConfig::identity(3);
        cfg.mask_prob = 1.0;
        let out = augment(&ramp(&s, 4), &s, &cfg).unwrap();
        assert!(out.values().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn temporal_resample_length() {
        let s = spec();
        let mut cfg = AugmentConfig::identity(3);
        cfg.resample_scale_range = [2.0, 2.0];
        assert_eq!(augment(&ramp(&s, 5), &s, &cfg).unwrap().len(), 10);
        cfg.resample_scale_range = [0.01, 0.01];
        assert_eq!(augment(&ramp(&s, 5), &s, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn seeded_determinism() {
        let s = spec();
        let seq = ramp(&s, 12);
        let cfg = AugmentConfig {
            rng_seed: 99,
            ..AugmentConfig::default()
        };
        assert_eq!(augment(&seq, &s, &cfg).unwrap(), augment(&seq, &s, &cfg).unwrap());
        let other = AugmentConfig { rng_seed: 100, ..cfg };
        assert_ne!(augment(&seq, &s, &other).unwrap(), augment(&seq, &s, &AugmentConfig { rng_seed: 99, ..other.clone() }).unwrap());
    }

    #[test]
    fn invalid_config_rejected() {
        let s = spec();
        let mut cfg = AugmentConfig::identity(0);
        cfg.mask_prob = 1.5;
        assert!(augment(&ramp(&s, 2), &s, &cfg).is_err());
        let mut cfg = AugmentConfig::identity(0);
        cfg.affine.scale = [2.0, 1.0];
        assert!(augment(&ramp(&s, 2), &s, &cfg).is_err());
    }
}
