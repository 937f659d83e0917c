use super::config::ModelConfig;
use super::model::{feature_matrix, Network};
use super::tensor::Real;
use super::weights::WeightStore;
use super::NnError;
use crate::preprocess::FeatureTensor;

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy<F: Real>(logits: &[F], label: usize) -> (F, Vec<F>) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    let mut probs: Vec<F> = logits
        .iter()
        .map(|&z| {
            let e = (z - max).exp();
            sum += e;
            e
        })
        .collect();
    for p in &mut probs {
        *p /= sum;
    }
    let loss = sum.ln() + max - logits[label];
    probs[label] -= F::one();
    (loss, probs)
}

impl<F: Real> Network<F> {
    /// Forward + backward for one sample; gradients are added into `grad`.
    pub fn accumulate_gradients(&self, x: &FeatureTensor, label: u32, grad: &mut Network<F>) -> Result<F, NnError> {
        let label = label as usize;
        if label >= self.config().num_classes {
            return Err(NnError::Label {
                label,
                num_classes: self.config().num_classes,
            });
        }
        let (logits, cache) = self.forward_cached(&feature_matrix(x))?;
        let (loss, dlogits) = cross_entropy(&logits, label);
        self.backward(&cache, &dlogits, grad);
        Ok(loss)
    }

    /// Mean loss and summed-then-averaged gradients over a batch.
    pub fn batch_gradients(&self, batch: &[(&FeatureTensor, u32)]) -> Result<(F, Network<F>), NnError> {
        if batch.is_empty() {
            return Err(NnError::Config("empty batch".into()));
        }
        let mut grad = Network::zeros(self.config())?;
        let mut total = F::zero();
        for &(x, label) in batch {
            total += self.accumulate_gradients(x, label, &mut grad)?;
        }
        let inv = F::one() / F::of(batch.len() as f64);
        for g in grad.param_slices_mut() {
            for v in g.iter_mut() {
                *v *= inv;
            }
        }
        Ok((total * inv, grad))
    }

    /// `w <- w - lr * g`.
    pub fn sgd_update(&mut self, grad: &Network<F>, lr: F) {
        for (w, g) in self.param_slices_mut().into_iter().zip(grad.param_slices()) {
            for (wv, &gv) in w.iter_mut().zip(g) {
                *wv -= lr * gv;
            }
        }
    }

    /// One plain gradient-descent step; returns the pre-update mean loss.
    /// Parameters are left untouched if the loss is not finite.
    pub fn train_batch(&mut self, batch: &[(&FeatureTensor, u32)], lr: F) -> Result<F, NnError> {
        let (loss, grad) = self.batch_gradients(batch)?;
        if !loss.is_finite() {
            return Err(NnError::Divergence(loss.as_f64()));
        }
        self.sgd_update(&grad, lr);
        Ok(loss)
    }
}

/// One SGD step on a weight store. Returns the updated weights and the mean
/// cross-entropy of the batch before the update.
pub fn train_step(
    batch: &[(FeatureTensor, u32)],
    w: &WeightStore,
    cfg: &ModelConfig,
    lr: f32,
) -> Result<(WeightStore, f32), NnError> {
    let mut net = Network::<f32>::from_store(w, cfg)?;
    let refs: Vec<(&FeatureTensor, u32)> = batch.iter().map(|(x, y)| (x, *y)).collect();
    let loss = net.train_batch(&refs, lr)?;
    Ok((net.to_store(), loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weights::init_weights;

    #[test]
    fn cross_entropy_uniform() {
        let (loss, grad) = cross_entropy(&[0.0f64, 0.0, 0.0, 0.0], 2);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(grad, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let (loss, _) = cross_entropy(&[1000.0f32, 0.0], 0);
        assert!(loss.is_finite() && loss.abs() < 1e-6);
    }

    fn sample(cfg: &ModelConfig, seed: usize) -> FeatureTensor {
        let n = cfg.max_seq_len * cfg.input_dim;
        FeatureTensor::new(
            cfg.max_seq_len,
            cfg.input_dim,
            (0..n).map(|i| (((i + seed) * 37) % 17) as f32 / 8.0 - 1.0).collect(),
        )
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let cfg = ModelConfig::tiny(6, 3);
        let w = init_weights(&cfg, 11).unwrap();
        let batch = vec![(sample(&cfg, 0), 1), (sample(&cfg, 3), 2)];
        let (w1, l1) = train_step(&batch, &w, &cfg, 0.0).unwrap();
        let (w2, l2) = train_step(&batch, &w1, &cfg, 0.0).unwrap();
        assert_eq!(w1, w);
        assert_eq!(w2, w);
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn repeated_steps_reduce_loss() {
        let cfg = ModelConfig::tiny(6, 3);
        let mut w = init_weights(&cfg, 12).unwrap();
        let batch = vec![(sample(&cfg, 5), 2)];
        let mut losses = Vec::new();
        for _ in 0..11 {
            let (next, loss) = train_step(&batch, &w, &cfg, 0.01).unwrap();
            losses.push(loss);
            w = next;
        }
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "{losses:?}");
        }
    }

    #[test]
    fn invalid_label_and_divergence() {
        let cfg = ModelConfig::tiny(6, 3);
        let w = init_weights(&cfg, 1).unwrap();
        let err = train_step(&[(sample(&cfg, 0), 3)], &w, &cfg, 0.1).unwrap_err();
        assert!(matches!(err, NnError::Label { .. }));

        let mut net = Network::<f32>::from_store(&w, &cfg).unwrap();
        net.head.bias[0] = f32::NAN;
        let x = sample(&cfg, 0);
        let before = net.clone();
        let err = net.train_batch(&[(&x, 0)], 0.1).unwrap_err();
        assert!(matches!(err, NnError::Divergence(_)));
        assert_eq!(net.to_store(), before.to_store());
    }
}
