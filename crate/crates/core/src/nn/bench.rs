//! Wall-clock latency of the forward pass.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::Classifier;
use super::NnError;
use crate::preprocess::FeatureTensor;

pub const WARMUP_RUNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub runs: usize,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile over ascending samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            runs: sorted.len(),
            p50_ms: percentile(&sorted, 0.50),
            p99_ms: percentile(&sorted, 0.99),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
        })
    }
}

/// Times `n_runs` forward passes on a fixed random input after
/// [`WARMUP_RUNS`] untimed ones.
pub fn benchmark_inference(net: &Classifier, n_runs: usize, seed: u64) -> Result<LatencyStats, NnError> {
    if n_runs == 0 {
        return Err(NnError::Config("n_runs must be positive".into()));
    }
    let cfg = net.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.max_seq_len * cfg.input_dim;
    let x = FeatureTensor::new(
        cfg.max_seq_len,
        cfg.input_dim,
        (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
    );
    for _ in 0..WARMUP_RUNS {
        std::hint::black_box(net.logits(&x)?);
    }
    let mut samples = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let start = Instant::now();
        std::hint::black_box(net.logits(std::hint::black_box(&x))?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(LatencyStats::from_samples(&samples).expect("n_runs > 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_weights, ModelConfig};

    #[test]
    fn single_run_percentiles_coincide() {
        let s = LatencyStats::from_samples(&[4.5]).unwrap();
        assert_eq!((s.p50_ms, s.p99_ms, s.mean_ms), (4.5, 4.5, 4.5));
    }

    #[test]
    fn percentiles_are_ordered() {
        let samples: Vec<f64> = (0..100).rev().map(|i| i as f64).collect();
        let s = LatencyStats::from_samples(&samples).unwrap();
        assert_eq!(s.p50_ms, 49.0);
        assert_eq!(s.p99_ms, 98.0);
        assert!(s.min_ms <= s.p50_ms && s.p50_ms <= s.p99_ms && s.p99_ms <= s.max_ms);
        assert!(LatencyStats::from_samples(&[]).is_none());
    }

    #[test]
    fn runs_on_tiny_model() {
        let cfg = ModelConfig::tiny(8, 4);
        let net = Classifier::from_store(&init_weights(&cfg, 0).unwrap(), &cfg).unwrap();
        let s = benchmark_inference(&net, 5, 1).unwrap();
        assert_eq!(s.runs, 5);
        assert!(s.p50_ms <= s.p99_ms);
        assert!(benchmark_inference(&net, 0, 1).is_err());
    }
}
