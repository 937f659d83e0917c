// Analytic gradients checked against central finite differences of the loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signpipe_core::nn::{cross_entropy, init_weights, ModelConfig, Network};
use signpipe_core::preprocess::FeatureTensor;

const EPS: f64 = 1e-4;

fn small_cfg() -> ModelConfig {
    ModelConfig {
        input_dim: 6,
        extractor_dims: vec![8],
        model_dim: 8,
        num_layers: 4,
        num_heads: 2,
        ff_dim: 16,
        num_classes: 3,
        max_seq_len: 4,
    }
}

fn random_input(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> FeatureTensor {
    let n = cfg.max_seq_len * cfg.input_dim;
    FeatureTensor::new(
        cfg.max_seq_len,
        cfg.input_dim,
        (0..n).map(|_| rng.random_range(-1.5f32..1.5)).collect(),
    )
}

fn loss(net: &Network<f64>, x: &FeatureTensor, label: u32) -> f64 {
    cross_entropy(&net.logits(x).unwrap(), label as usize).0
}

/// Perturbs the network so LayerNorm gains/biases and head biases are not at
/// their symmetric init values.
fn jitter(net: &mut Network<f64>, rng: &mut ChaCha8Rng) {
    for p in net.param_slices_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

#[test]
fn gradients_match_central_differences_everywhere() {
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let store = init_weights(&cfg, 17).unwrap();
    let mut net = Network::<f64>::from_store(&store, &cfg).unwrap();
    jitter(&mut net, &mut rng);
    let x = random_input(&cfg, &mut rng);
    let label = 1;

    let mut grad = Network::<f64>::zeros(&cfg).unwrap();
    net.accumulate_gradients(&x, label, &mut grad).unwrap();
    let analytic: Vec<Vec<f64>> = grad.param_slices().iter().map(|s| s.to_vec()).collect();

    // a few coordinates from every tensor
    let layout = cfg.param_layout();
    let mut worst = (0.0f64, String::new());
    for (t, spec) in layout.iter().enumerate() {
        for _ in 0..3 {
            let i = rng.random_range(0..spec.numel());
            let orig = net.param_slices()[t][i];
            net.param_slices_mut()[t][i] = orig + EPS;
            let up = loss(&net, &x, label);
            net.param_slices_mut()[t][i] = orig - EPS;
            let down = loss(&net, &x, label);
            net.param_slices_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let rel = relative_error(analytic[t][i], numeric);
            if rel > worst.0 {
                worst = (rel, format!("{}[{i}]: analytic {} numeric {numeric}", spec.name, analytic[t][i]));
            }
        }
    }
    assert!(worst.0 < 1e-3, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn batch_gradient_is_mean_of_sample_gradients() {
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::<f64>::from_store(&init_weights(&cfg, 3).unwrap(), &cfg).unwrap();
    let a = random_input(&cfg, &mut rng);
    let b = random_input(&cfg, &mut rng);

    let (loss, batch) = net.batch_gradients(&[(&a, 0), (&b, 2)]).unwrap();
    let mut ga = Network::<f64>::zeros(&cfg).unwrap();
    let la = net.accumulate_gradients(&a, 0, &mut ga).unwrap();
    let mut gb = Network::<f64>::zeros(&cfg).unwrap();
    let lb = net.accumulate_gradients(&b, 2, &mut gb).unwrap();
    assert!((loss - (la + lb) / 2.0).abs() < 1e-12);
    for ((m, x), y) in batch.param_slices().iter().zip(ga.param_slices()).zip(gb.param_slices()) {
        for ((&m, &x), &y) in m.iter().zip(x).zip(y) {
            assert!((m - (x + y) / 2.0).abs() < 1e-12);
        }
    }
}
