//! From-scratch tensor math and the sign classifier: forward pass, manual
//! backpropagation, parameter accounting and weight-file I/O.

mod bench;
mod config;
mod fit;
mod model;
pub mod tensor;
mod train;
mod weights;

pub use bench::{benchmark_inference, LatencyStats, WARMUP_RUNS};
pub use fit::{evaluate, fit, ClassCounts, EpochReport, Evaluation, TrainConfig};
pub use config::{count_parameters, ModelConfig, ParamSpec, REFERENCE_PARAMETER_COUNT};
pub use model::{feature_matrix, Classifier, Dense, EncoderLayer, ExtractorStage, ForwardCache, LayerNorm, Network};
pub use tensor::{Matrix, Real};
pub use train::{cross_entropy, train_step};
pub use weights::{init_weights, load_weights, save_weights, Tensor, WeightStore, MAGIC, VERSION};

use crate::landmark::LabelMap;
use crate::preprocess::FeatureTensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch for `{tensor}`: expected {expected:?}, found {found:?}")]
    Shape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("training diverged: loss = {0}")]
    Divergence(f64),
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Unnormalized class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f32>);

impl Logits {
    /// Probabilities, computed in f64 and rounded.
    pub fn softmax(&self) -> Vec<f32> {
        let max = self.0.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = self.0.iter().map(|&z| (z as f64 - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| (e / sum) as f32).collect()
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the `k` highest scores, best first, ties by lower index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: u32,
    pub gloss: String,
    pub confidence: f32,
}

impl Prediction {
    pub fn from_logits(logits: &Logits, labels: &LabelMap) -> Self {
        let class_id = logits.argmax();
        let confidence = logits.softmax()[class_id];
        let gloss = labels
            .gloss(class_id as u32)
            .map(str::to_string)
            .unwrap_or_else(|| format!("class_{class_id:03}"));
        Self {
            class_id: class_id as u32,
            gloss,
            confidence,
        }
    }
}

impl Classifier {
    pub fn predict(&self, x: &FeatureTensor, labels: &LabelMap) -> Result<Prediction, NnError> {
        Ok(Prediction::from_logits(&Logits(self.logits(x)?), labels))
    }
}

/// Runs the extractor stack of the model stored in `w`.
pub fn feature_extract(x: &FeatureTensor, w: &WeightStore, cfg: &ModelConfig) -> Result<Matrix<f32>, NnError> {
    Classifier::from_store(w, cfg)?.feature_extract(&feature_matrix(x))
}

pub fn encoder_layer(h: &Matrix<f32>, w: &WeightStore, cfg: &ModelConfig, layer: usize) -> Result<Matrix<f32>, NnError> {
    Classifier::from_store(w, cfg)?.encoder_layer(h, layer)
}

pub fn forward(x: &FeatureTensor, w: &WeightStore, cfg: &ModelConfig) -> Result<Logits, NnError> {
    Ok(Logits(Classifier::from_store(w, cfg)?.logits(x)?))
}

pub fn predict(x: &FeatureTensor, w: &WeightStore, cfg: &ModelConfig, labels: &LabelMap) -> Result<Prediction, NnError> {
    Classifier::from_store(w, cfg)?.predict(x, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_goes_to_lowest_id() {
        let labels = LabelMap::placeholder(2);
        let p = Prediction::from_logits(&Logits(vec![0.0, 0.0]), &labels);
        assert_eq!(p.class_id, 0);
        assert_eq!(p.confidence, 0.5);
    }

    #[test]
    fn softmax_arithmetic() {
        let labels = LabelMap::new(vec!["a".into(), "b".into()]).unwrap();
        let p = Prediction::from_logits(&Logits(vec![0.0, 3f32.ln()]), &labels);
        assert_eq!(p.class_id, 1);
        assert_eq!(p.gloss, "b");
        assert!((p.confidence - 0.75).abs() < 1e-6);
    }

    #[test]
    fn top_k_order() {
        let l = Logits(vec![0.1, 0.9, 0.5, 0.9]);
        assert_eq!(l.top_k(3), vec![1, 3, 2]);
        assert_eq!(l.argmax(), 1);
    }
}
