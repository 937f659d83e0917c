//! Synthetic landmark clips with class-specific hand trajectories, for
//! smoke-testing training and the end-to-end pipeline.
//!
//! Every class moves both hands along its own Lissajous curve over a fixed
//! body; clips differ in length, timing, placement, scale and noise, and
//! hands occasionally drop out.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::landmark::{LandmarkFrame, LandmarkKind, SignSample};
use crate::preprocess::SelectionSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Standard deviation of per-coordinate Gaussian noise.
    pub noise: f64,
    /// Probability that a hand is missing in a frame.
    pub dropout: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            min_frames: 16,
            max_frames: 48,
            noise: 0.01,
            dropout: 0.05,
        }
    }
}

struct Motion {
    fx: f64,
    fy: f64,
    phase: f64,
}

fn motion(class: usize) -> Motion {
    Motion {
        fx: 1.0 + (class % 3) as f64,
        fy: 1.0 + ((class / 3) % 3) as f64,
        phase: class as f64 * 0.9,
    }
}

impl Motion {
    fn at(&self, t: f64) -> (f64, f64) {
        ((TAU * self.fx * t + self.phase).sin(), (TAU * self.fy * t).sin())
    }
}

/// Fixed offsets of the 21 hand joints around the wrist.
fn hand_shape(i: usize) -> (f64, f64) {
    if i == 0 {
        return (0.0, 0.0);
    }
    let finger = (i - 1) / 4;
    let joint = ((i - 1) % 4 + 1) as f64;
    let angle = -0.9 + finger as f64 * 0.45;
    (0.012 * joint * angle.sin(), -0.012 * joint * angle.cos())
}

/// `n` labeled clips, classes assigned round-robin. Only landmarks kept by
/// `spec` are emitted.
pub fn generate(n: usize, cfg: &SynthConfig, spec: &SelectionSpec, seed: u64) -> Vec<SignSample> {
    assert!(cfg.num_classes > 0 && cfg.min_frames > 0 && cfg.min_frames <= cfg.max_frames);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise).expect("finite noise");
    (0..n)
        .map(|i| {
            let label = i % cfg.num_classes;
            let frames = clip(label, cfg, spec, &mut rng, &noise);
            SignSample::new(format!("synth_{seed}_{i:05}"), frames, Some(label as u32))
        })
        .collect()
}

fn clip(class: usize, cfg: &SynthConfig, spec: &SelectionSpec, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<LandmarkFrame> {
    let len = rng.random_range(cfg.min_frames..=cfg.max_frames);
    let right = motion(class);
    let left = motion(class + 7);
    let (cx, cy) = (rng.random_range(0.4..0.6), rng.random_range(0.45..0.55));
    let scale = rng.random_range(0.85..1.15);
    let t0 = rng.random_range(0.0..0.1);
    let speed = rng.random_range(0.9..1.1);
    let amp = 0.12;

    let mut out = Vec::new();
    let mut push = |frame: u32, kind, idx: u32, (x, y): (f64, f64), rng: &mut ChaCha8Rng| {
        let x = cx + scale * x + noise.sample(rng);
        let y = cy + scale * y + noise.sample(rng);
        out.push(LandmarkFrame::new(frame, kind, idx, x as f32, y as f32, 0.0));
    };

    for f in 0..len {
        let t = t0 + speed * f as f64 / len.max(2).saturating_sub(1) as f64;
        let frame = f as u32;
        for &i in &spec.lips {
            let a = i as f64 * 0.37;
            push(frame, LandmarkKind::Face, i, (0.03 * a.cos(), -0.2 + 0.012 * a.sin()), rng);
        }
        let (rx, ry) = right.at(t);
        let (lx, ly) = left.at(t);
        let right_wrist = (-0.12 + amp * rx, 0.05 + amp * ry);
        let left_wrist = (0.12 + 0.5 * amp * lx, 0.08 + 0.5 * amp * ly);
        for (kind, wrist) in [(LandmarkKind::LeftHand, left_wrist), (LandmarkKind::RightHand, right_wrist)] {
            if rng.random_bool(cfg.dropout) {
                continue;
            }
            for j in 0..21u32 {
                let (dx, dy) = hand_shape(j as usize);
                push(frame, kind, j, (wrist.0 + dx, wrist.1 + dy), rng);
            }
        }
        for &i in &spec.pose {
            let p = match i {
                11 => (0.1, -0.05),
                12 => (-0.1, -0.05),
                13 => (0.15, 0.1),
                14 => (-0.15, 0.1),
                15 => left_wrist,
                16 => right_wrist,
                _ => {
                    let a = i as f64 * 0.61;
                    (0.2 * a.cos(), 0.2 * a.sin())
                }
            };
            push(frame, LandmarkKind::Pose, i, p, rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::NUM_CLASSES;

    #[test]
    fn balanced_valid_and_seeded() {
        let spec = SelectionSpec::default();
        let cfg = SynthConfig::default();
        let a = generate(20, &cfg, &spec, 3);
        assert_eq!(a, generate(20, &cfg, &spec, 3));
        assert_ne!(a, generate(20, &cfg, &spec, 4));
        for (i, s) in a.iter().enumerate() {
            assert_eq!(s.label, Some((i % 5) as u32));
            s.validate(NUM_CLASSES).unwrap();
            assert!((cfg.min_frames..=cfg.max_frames).contains(&s.num_frames()));
        }
    }

    #[test]
    fn hands_follow_class_templates() {
        assert_ne!(motion(0).at(0.3), motion(1).at(0.3));
        let shapes: Vec<_> = (0..21).map(hand_shape).collect();
        for (i, a) in shapes.iter().enumerate() {
            assert!(shapes[i + 1..].iter().all(|b| b != a));
        }
    }
}
