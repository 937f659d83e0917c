//! Mini-batch training loop and dataset evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{feature_matrix, Classifier};
use super::train::cross_entropy;
use super::{Logits, NnError};
use crate::preprocess::FeatureTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Stop after the first epoch whose validation top-1 reaches this value.
    pub stop_at_val_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.05,
            batch_size: 16,
            seed: 0,
            stop_at_val_acc: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub support: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub samples: usize,
    pub mean_loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub per_class: Vec<ClassCounts>,
}

/// Loss and accuracy of `net` on labeled data. Empty data is an error.
pub fn evaluate(net: &Classifier, data: &[(FeatureTensor, u32)]) -> Result<Evaluation, NnError> {
    if data.is_empty() {
        return Err(NnError::Config("cannot evaluate on an empty dataset".into()));
    }
    let classes = net.config().num_classes;
    let mut per_class = vec![ClassCounts::default(); classes];
    let (mut loss, mut top1, mut top5) = (0.0f64, 0usize, 0usize);
    for (x, label) in data {
        let y = *label as usize;
        if y >= classes {
            return Err(NnError::Label {
                label: y,
                num_classes: classes,
            });
        }
        let logits = Logits(net.logits(x)?);
        loss += cross_entropy(&logits.0, y).0 as f64;
        let best = logits.top_k(5);
        per_class[y].support += 1;
        if best[0] == y {
            top1 += 1;
            per_class[y].correct += 1;
        }
        if best.contains(&y) {
            top5 += 1;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        samples: data.len(),
        mean_loss: loss / n,
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
        per_class,
    })
}

/// Shuffled mini-batch SGD. `on_epoch` sees each report as it is produced.
/// With no validation data the validation columns are NaN.
pub fn fit(
    net: &mut Classifier,
    train: &[(FeatureTensor, u32)],
    val: &[(FeatureTensor, u32)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>, NnError> {
    if train.is_empty() && cfg.epochs > 0 {
        return Err(NnError::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(NnError::Config("batch size must be positive".into()));
    }
    // validate shapes once up front so a bad sample fails before any update
    for (x, _) in train.iter().chain(val) {
        net.forward_matrix(&feature_matrix(x))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&FeatureTensor, u32)> = chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            net.train_batch(&batch, cfg.lr)?;
        }
        let tr = evaluate(net, train)?;
        let (val_loss, val_acc) = match evaluate(net, val) {
            Ok(v) => (v.mean_loss, v.top1),
            Err(_) if val.is_empty() => (f64::NAN, f64::NAN),
            Err(e) => return Err(e),
        };
        let report = EpochReport {
            epoch,
            train_loss: tr.mean_loss,
            train_acc: tr.top1,
            val_loss,
            val_acc,
        };
        on_epoch(&report);
        reports.push(report);
        if cfg.stop_at_val_acc.is_some_and(|target| val_acc >= target) {
            break;
        }
    }
    Ok(reports)
}
