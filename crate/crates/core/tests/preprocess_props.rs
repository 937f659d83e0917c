use proptest::prelude::*;
use signpipe_core::landmark::{LandmarkFrame, LandmarkKind, SignSample};
use signpipe_core::preprocess::{
    apply_affine, augment, flip_horizontal, normalize, preprocess_pipeline, resample, select_and_drop_z, Affine,
    AugmentConfig, FrameSeq, SelectionSpec,
};

fn small_spec() -> SelectionSpec {
    SelectionSpec::new(vec![0, 13, 17], vec![11, 12, 15, 16]).unwrap()
}

/// Frames of raw coordinates in [0, 1], with roughly `missing` of the
/// points absent.
fn frame_seq(points: usize) -> impl Strategy<Value = FrameSeq> {
    (1usize..40, 0.0f64..0.5).prop_flat_map(move |(len, missing)| {
        prop::collection::vec((0.0f32..1.0, 0.0f32..1.0, 0.0f64..1.0), len * points).prop_map(move |pts| {
            let mut data = Vec::with_capacity(pts.len() * 2);
            for (x, y, u) in pts {
                if u < missing {
                    data.extend([f32::NAN, f32::NAN]);
                } else {
                    data.extend([x, y]);
                }
            }
            FrameSeq::new(points, data)
        })
    })
}

fn sample(len: usize, spec: &SelectionSpec, seed: u64) -> SignSample {
    let mut frames = Vec::new();
    let mut v = seed as f32 * 0.013;
    let mut next = || {
        v = (v * 1.7 + 0.31).fract();
        v
    };
    for f in 0..len as u32 {
        for &i in &spec.lips {
            frames.push(LandmarkFrame::new(f, LandmarkKind::Face, i, next(), next(), 0.0));
        }
        for j in 0..21 {
            frames.push(LandmarkFrame::new(f, LandmarkKind::RightHand, j, next(), next(), 0.0));
        }
    }
    SignSample::new("s", frames, None)
}

fn observed_stats(raw: &FrameSeq, out: &FrameSeq) -> Option<(f64, f64)> {
    let mut vals = Vec::new();
    for (r, o) in raw.values().chunks_exact(2).zip(out.values().chunks_exact(2)) {
        if !(r[0].is_nan() || r[1].is_nan()) {
            vals.extend([o[0] as f64, o[1] as f64]);
        }
    }
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Some((mean, std))
}

proptest! {
    #[test]
    fn pipeline_shape_for_any_length(len in 1usize..500, target in 1usize..64, seed in any::<u64>()) {
        let spec = small_spec();
        let x = preprocess_pipeline(&sample(len, &spec, seed), &spec, target, None).unwrap();
        prop_assert_eq!(x.shape(), (target, spec.feature_dim()));
        prop_assert!(x.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn normalization_statistics(seq in frame_seq(6)) {
        let out = normalize(&seq);
        match observed_stats(&seq, &seq) {
            None => prop_assert!(out.is_err()),
            Some((_, raw_std)) => {
                let out = out.unwrap();
                prop_assert!(out.values().iter().all(|v| v.is_finite()));
                let (mean, std) = observed_stats(&seq, &out).unwrap();
                prop_assert!(mean.abs() < 1e-6, "mean {mean}");
                if raw_std > 1e-6 {
                    prop_assert!((std - 1.0).abs() < 1e-6, "std {std}");
                }
            }
        }
    }

    #[test]
    fn double_flip_is_identity(seq in frame_seq(small_spec().num_points())) {
        let spec = small_spec();
        let twice = flip_horizontal(&flip_horizontal(&seq, &spec), &spec);
        for (a, b) in seq.values().iter().zip(twice.values()) {
            prop_assert!(a.is_nan() && b.is_nan() || (a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn resample_at_same_length_is_identity(seq in frame_seq(4)) {
        let x = resample(&seq, seq.len()).unwrap();
        prop_assert_eq!(x.data.len(), seq.values().len());
        for (a, b) in seq.values().iter().zip(&x.data) {
            prop_assert!(a.to_bits() == b.to_bits());
        }
    }

    #[test]
    fn resample_keeps_constants(c in -5.0f32..5.0, len in 1usize..60, target in 1usize..80) {
        let seq = FrameSeq::new(2, vec![c; len * 4]);
        let x = resample(&seq, target).unwrap();
        prop_assert!(x.data.iter().all(|&v| v == c));
    }

    #[test]
    fn augment_is_seeded(seq in frame_seq(small_spec().num_points()), seed in any::<u64>()) {
        let spec = small_spec();
        let cfg = AugmentConfig { rng_seed: seed, ..AugmentConfig::default() };
        let a = augment(&seq, &spec, &cfg).unwrap();
        let b = augment(&seq, &spec, &cfg).unwrap();
        let bits = |s: &FrameSeq| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn identity_augmentation_changes_nothing(seq in frame_seq(small_spec().num_points()), seed in any::<u64>()) {
        let spec = small_spec();
        let out = augment(&seq, &spec, &AugmentConfig::identity(seed)).unwrap();
        let bits = |s: &FrameSeq| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&out), bits(&seq));
        let same = apply_affine(&seq, &Affine::IDENTITY);
        prop_assert_eq!(bits(&same), bits(&seq));
    }
}

#[test]
fn selection_drops_unselected_points() {
    let spec = small_spec();
    let s = SignSample::new(
        "x",
        vec![
            LandmarkFrame::new(0, LandmarkKind::Face, 1, 0.5, 0.5, 0.0),
            LandmarkFrame::new(0, LandmarkKind::Face, 13, 0.25, 0.75, 0.0),
        ],
        None,
    );
    let seq = select_and_drop_z(&s, &spec);
    assert_eq!(seq.len(), 1);
    assert_eq!(seq.point(0, 1), [0.25, 0.75]);
    assert_eq!(seq.values().iter().filter(|v| !v.is_nan()).count(), 2);
}
