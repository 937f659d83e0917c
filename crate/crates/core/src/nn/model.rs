//! Sign classifier: a dense feature extractor, learned positional embedding,
//! a stack of pre-norm transformer encoder layers, mean pooling over time and
//! a linear logits head.
//!
//! ```text
//! x (T x D) -> [dense -> LayerNorm -> ReLU]* -> + pos -> encoder x N -> mean_t -> dense -> logits
//! encoder:  h1 = h + MHA(LN(h));  out = h1 + FFN(LN(h1))
//! ```
//!
//! Every layer keeps what its backward pass needs in a cache struct; the
//! inference path simply drops the caches.

use super::config::ModelConfig;
use super::tensor::{dot, matmul, matmul_a_bt, matmul_at_b_acc, softmax_in_place, Matrix, Real};
use super::weights::{Tensor, WeightStore};
use super::NnError;
use crate::preprocess::FeatureTensor;

const NORM_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `in x out`, so `y = x W + b`.
    pub weight: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Real> Dense<F> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: vec![F::zero(); outputs],
        }
    }

    pub fn forward(&self, x: &Matrix<F>) -> Matrix<F> {
        let mut y = matmul(x, &self.weight);
        for r in 0..y.rows {
            for (v, &b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &Matrix<F>, dy: &Matrix<F>, grad: &mut Dense<F>) -> Matrix<F> {
        matmul_at_b_acc(x, dy, &mut grad.weight);
        for r in 0..dy.rows {
            for (g, &d) in grad.bias.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        matmul_a_bt(dy, &self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gain: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone)]
struct NormCache<F> {
    xhat: Matrix<F>,
    inv_std: Vec<F>,
    floored: Vec<bool>,
}

impl<F: Real> LayerNorm<F> {
    fn zeros(d: usize) -> Self {
        Self {
            gain: vec![F::zero(); d],
            bias: vec![F::zero(); d],
        }
    }

    /// Row-wise `(x - mean) / std` with population std; rows whose std is
    /// below the floor are only centered.
    fn forward(&self, x: &Matrix<F>) -> (Matrix<F>, NormCache<F>) {
        let n = F::of(x.cols as f64);
        let mut xhat = Matrix::zeros(x.rows, x.cols);
        let mut y = Matrix::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        let mut floored = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mut mean = F::zero();
            for &v in row {
                mean += v;
            }
            mean /= n;
            let mut var = F::zero();
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var /= n;
            let std = var.sqrt();
            let (inv, floor) = if std < F::of(NORM_STD_FLOOR) {
                (F::one(), true)
            } else {
                (F::one() / std, false)
            };
            inv_std.push(inv);
            floored.push(floor);
            let xr = xhat.row_mut(r);
            for (h, &v) in xr.iter_mut().zip(row) {
                *h = (v - mean) * inv;
            }
            let yr = &mut y.data[r * x.cols..(r + 1) * x.cols];
            for c in 0..x.cols {
                yr[c] = self.gain[c] * xhat.data[r * x.cols + c] + self.bias[c];
            }
        }
        (y, NormCache { xhat, inv_std, floored })
    }

    fn backward(&self, cache: &NormCache<F>, dy: &Matrix<F>, grad: &mut LayerNorm<F>) -> Matrix<F> {
        let cols = dy.cols;
        let n = F::of(cols as f64);
        let mut dx = Matrix::zeros(dy.rows, cols);
        let mut dxhat = vec![F::zero(); cols];
        for r in 0..dy.rows {
            let dyr = dy.row(r);
            let xh = cache.xhat.row(r);
            let mut m1 = F::zero();
            let mut m2 = F::zero();
            for c in 0..cols {
                grad.gain[c] += dyr[c] * xh[c];
                grad.bias[c] += dyr[c];
                dxhat[c] = dyr[c] * self.gain[c];
                m1 += dxhat[c];
                m2 += dxhat[c] * xh[c];
            }
            m1 /= n;
            m2 /= n;
            let inv = cache.inv_std[r];
            let out = dx.row_mut(r);
            if cache.floored[r] {
                for c in 0..cols {
                    out[c] = dxhat[c] - m1;
                }
            } else {
                for c in 0..cols {
                    out[c] = inv * (dxhat[c] - m1 - xh[c] * m2);
                }
            }
        }
        dx
    }
}

fn relu_in_place<F: Real>(m: &mut Matrix<F>) {
    for v in &mut m.data {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
fn relu_backward_in_place<F: Real>(activated: &Matrix<F>, grad: &mut Matrix<F>) {
    for (g, &a) in grad.data.iter_mut().zip(&activated.data) {
        if a <= F::zero() {
            *g = F::zero();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorStage<F> {
    pub dense: Dense<F>,
    pub norm: LayerNorm<F>,
}

struct ExtractorCache<F> {
    input: Matrix<F>,
    norm: NormCache<F>,
    activated: Matrix<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub norm1: LayerNorm<F>,
    pub query: Dense<F>,
    pub key: Dense<F>,
    pub value: Dense<F>,
    pub output: Dense<F>,
    pub norm2: LayerNorm<F>,
    pub ff_in: Dense<F>,
    pub ff_out: Dense<F>,
}

struct AttentionCache<F> {
    input: Matrix<F>,
    q: Matrix<F>,
    k: Matrix<F>,
    v: Matrix<F>,
    /// One `T x T` weight matrix per head.
    weights: Vec<Matrix<F>>,
    context: Matrix<F>,
}

struct LayerCache<F> {
    norm1: NormCache<F>,
    attn: AttentionCache<F>,
    norm2: NormCache<F>,
    ff_input: Matrix<F>,
    ff_hidden: Matrix<F>,
}

impl<F: Real> EncoderLayer<F> {
    fn zeros(d: usize, ff: usize) -> Self {
        Self {
            norm1: LayerNorm::zeros(d),
            query: Dense::zeros(d, d),
            key: Dense::zeros(d, d),
            value: Dense::zeros(d, d),
            output: Dense::zeros(d, d),
            norm2: LayerNorm::zeros(d),
            ff_in: Dense::zeros(d, ff),
            ff_out: Dense::zeros(ff, d),
        }
    }

    fn attention(&self, x: &Matrix<F>, heads: usize) -> (Matrix<F>, AttentionCache<F>) {
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let (t, d) = (x.rows, x.cols);
        let hd = d / heads;
        let scale = F::one() / F::of(hd as f64).sqrt();
        let mut context = Matrix::zeros(t, d);
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            let mut a = Matrix::zeros(t, t);
            for i in 0..t {
                let qi = &q.row(i)[cols.clone()];
                let row = a.row_mut(i);
                for j in 0..t {
                    row[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(row);
                let ctx = &mut context.data[i * d + h * hd..i * d + (h + 1) * hd];
                for j in 0..t {
                    let w = row[j];
                    for (c, &vv) in ctx.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *c += w * vv;
                    }
                }
            }
            weights.push(a);
        }
        let out = self.output.forward(&context);
        let cache = AttentionCache {
            input: x.clone(),
            q,
            k,
            v,
            weights,
            context,
        };
        (out, cache)
    }

    fn attention_backward(&self, cache: &AttentionCache<F>, dout: &Matrix<F>, grad: &mut EncoderLayer<F>) -> Matrix<F> {
        let dctx = self.output.backward(&cache.context, dout, &mut grad.output);
        let (t, d) = (dctx.rows, dctx.cols);
        let heads = cache.weights.len();
        let hd = d / heads;
        let scale = F::one() / F::of(hd as f64).sqrt();
        let mut dq = Matrix::zeros(t, d);
        let mut dk = Matrix::zeros(t, d);
        let mut dv = Matrix::zeros(t, d);
        let mut da = vec![F::zero(); t];
        for (h, a) in cache.weights.iter().enumerate() {
            let lo = h * hd;
            let hi = lo + hd;
            for i in 0..t {
                let dci = &dctx.row(i)[lo..hi];
                let ai = a.row(i);
                let mut s = F::zero();
                for j in 0..t {
                    da[j] = dot(dci, &cache.v.row(j)[lo..hi]);
                    s += ai[j] * da[j];
                    let dvj = &mut dv.data[j * d + lo..j * d + hi];
                    for (g, &c) in dvj.iter_mut().zip(dci) {
                        *g += ai[j] * c;
                    }
                }
                for j in 0..t {
                    let ds = ai[j] * (da[j] - s) * scale;
                    if ds == F::zero() {
                        continue;
                    }
                    let kj = &cache.k.row(j)[lo..hi];
                    let dqi = &mut dq.data[i * d + lo..i * d + hi];
                    for (g, &kv) in dqi.iter_mut().zip(kj) {
                        *g += ds * kv;
                    }
                    let qi = &cache.q.row(i)[lo..hi];
                    let dkj = &mut dk.data[j * d + lo..j * d + hi];
                    for (g, &qv) in dkj.iter_mut().zip(qi) {
                        *g += ds * qv;
                    }
                }
            }
        }
        let mut dx = self.query.backward(&cache.input, &dq, &mut grad.query);
        dx.add_assign(&self.key.backward(&cache.input, &dk, &mut grad.key));
        dx.add_assign(&self.value.backward(&cache.input, &dv, &mut grad.value));
        dx
    }

    fn forward(&self, h: &Matrix<F>, heads: usize) -> (Matrix<F>, LayerCache<F>) {
        let (n1, norm1) = self.norm1.forward(h);
        let (a, attn) = self.attention(&n1, heads);
        let mut h1 = h.clone();
        h1.add_assign(&a);
        let (n2, norm2) = self.norm2.forward(&h1);
        let mut hidden = self.ff_in.forward(&n2);
        relu_in_place(&mut hidden);
        let f = self.ff_out.forward(&hidden);
        let mut out = h1;
        out.add_assign(&f);
        let cache = LayerCache {
            norm1,
            attn,
            norm2,
            ff_input: n2,
            ff_hidden: hidden,
        };
        (out, cache)
    }

    fn backward(&self, cache: &LayerCache<F>, dout: &Matrix<F>, grad: &mut EncoderLayer<F>) -> Matrix<F> {
        let mut dhidden = self.ff_out.backward(&cache.ff_hidden, dout, &mut grad.ff_out);
        relu_backward_in_place(&cache.ff_hidden, &mut dhidden);
        let dn2 = self.ff_in.backward(&cache.ff_input, &dhidden, &mut grad.ff_in);
        let mut dh1 = self.norm2.backward(&cache.norm2, &dn2, &mut grad.norm2);
        dh1.add_assign(dout);

        let dn1 = self.attention_backward(&cache.attn, &dh1, grad);
        let mut dh = self.norm1.backward(&cache.norm1, &dn1, &mut grad.norm1);
        dh.add_assign(&dh1);
        dh
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache<F> {
    extractor: Vec<ExtractorCache<F>>,
    layers: Vec<LayerCache<F>>,
    frames: usize,
    pooled: Matrix<F>,
}

/// Full parameter set of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    cfg: ModelConfig,
    pub extractor: Vec<ExtractorStage<F>>,
    /// `max_seq_len x model_dim`; the first `T` rows are added to a `T`-frame input.
    pub pos_embedding: Matrix<F>,
    pub layers: Vec<EncoderLayer<F>>,
    pub head: Dense<F>,
}

/// Inference-precision network.
pub type Classifier = Network<f32>;

impl<F: Real> Network<F> {
    /// All-zero parameters, also used as a gradient accumulator.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut width = cfg.input_dim;
        let extractor = cfg
            .extractor_dims
            .iter()
            .map(|&w| {
                let stage = ExtractorStage {
                    dense: Dense::zeros(width, w),
                    norm: LayerNorm::zeros(w),
                };
                width = w;
                stage
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            extractor,
            pos_embedding: Matrix::zeros(cfg.max_seq_len, cfg.model_dim),
            layers: (0..cfg.num_layers)
                .map(|_| EncoderLayer::zeros(cfg.model_dim, cfg.ff_dim))
                .collect(),
            head: Dense::zeros(cfg.model_dim, cfg.num_classes),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Parameter slices in the order of [`ModelConfig::param_layout`].
    pub fn param_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for s in &self.extractor {
            out.extend([&s.dense.weight.data[..], &s.dense.bias, &s.norm.gain, &s.norm.bias]);
        }
        out.push(&self.pos_embedding.data);
        for l in &self.layers {
            out.extend([
                &l.norm1.gain[..],
                &l.norm1.bias,
                &l.query.weight.data,
                &l.query.bias,
                &l.key.weight.data,
                &l.key.bias,
                &l.value.weight.data,
                &l.value.bias,
                &l.output.weight.data,
                &l.output.bias,
                &l.norm2.gain,
                &l.norm2.bias,
                &l.ff_in.weight.data,
                &l.ff_in.bias,
                &l.ff_out.weight.data,
                &l.ff_out.bias,
            ]);
        }
        out.extend([&self.head.weight.data[..], &self.head.bias]);
        out
    }

    /// Mutable counterpart of [`Network::param_slices`], same order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for s in &mut self.extractor {
            out.extend([
                &mut s.dense.weight.data[..],
                &mut s.dense.bias,
                &mut s.norm.gain,
                &mut s.norm.bias,
            ]);
        }
        out.push(&mut self.pos_embedding.data);
        for l in &mut self.layers {
            out.extend([
                &mut l.norm1.gain[..],
                &mut l.norm1.bias,
                &mut l.query.weight.data,
                &mut l.query.bias,
                &mut l.key.weight.data,
                &mut l.key.bias,
                &mut l.value.weight.data,
                &mut l.value.bias,
                &mut l.output.weight.data,
                &mut l.output.bias,
                &mut l.norm2.gain,
                &mut l.norm2.bias,
                &mut l.ff_in.weight.data,
                &mut l.ff_in.bias,
                &mut l.ff_out.weight.data,
                &mut l.ff_out.bias,
            ]);
        }
        out.extend([&mut self.head.weight.data[..], &mut self.head.bias]);
        out
    }

    /// Builds a network from named tensors, checking every name and shape.
    pub fn from_store(store: &WeightStore, cfg: &ModelConfig) -> Result<Self, NnError> {
        let mut net = Self::zeros(cfg)?;
        let layout = cfg.param_layout();
        for (spec, slot) in layout.iter().zip(net.param_slices_mut()) {
            let t = store
                .get(&spec.name)
                .ok_or_else(|| NnError::MissingTensor(spec.name.clone()))?;
            if t.shape != spec.shape {
                return Err(NnError::Shape {
                    tensor: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: t.shape.clone(),
                });
            }
            for (d, &s) in slot.iter_mut().zip(&t.data) {
                *d = F::of(s as f64);
            }
        }
        Ok(net)
    }

    pub fn to_store(&self) -> WeightStore {
        let mut store = WeightStore::new();
        for (spec, slot) in self.cfg.param_layout().into_iter().zip(self.param_slices()) {
            let data = slot.iter().map(|v| v.as_f64() as f32).collect();
            store
                .insert(spec.name, Tensor::new(spec.shape, data))
                .expect("layout names are unique");
        }
        store
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        let mut out = Network::<G>::zeros(&self.cfg).expect("config already validated");
        for (dst, src) in out.param_slices_mut().into_iter().zip(self.param_slices()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = G::of(s.as_f64());
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn check_input(&self, x: &Matrix<F>) -> Result<(), NnError> {
        if x.cols != self.cfg.input_dim || x.rows == 0 || x.rows > self.cfg.max_seq_len {
            return Err(NnError::Shape {
                tensor: "input".into(),
                expected: vec![self.cfg.max_seq_len, self.cfg.input_dim],
                found: vec![x.rows, x.cols],
            });
        }
        Ok(())
    }

    fn extract_cached(&self, x: &Matrix<F>) -> (Matrix<F>, Vec<ExtractorCache<F>>) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.extractor.len());
        for stage in &self.extractor {
            let z = stage.dense.forward(&h);
            let (mut a, norm) = stage.norm.forward(&z);
            relu_in_place(&mut a);
            let input = std::mem::replace(&mut h, a.clone());
            caches.push(ExtractorCache {
                input,
                norm,
                activated: a,
            });
        }
        (h, caches)
    }

    /// Per-frame `dense -> LayerNorm -> ReLU` chain, `(T, D) -> (T, d)`.
    pub fn feature_extract(&self, x: &Matrix<F>) -> Result<Matrix<F>, NnError> {
        if x.cols != self.cfg.input_dim {
            return Err(NnError::Shape {
                tensor: "input".into(),
                expected: vec![x.rows, self.cfg.input_dim],
                found: vec![x.rows, x.cols],
            });
        }
        Ok(self.extract_cached(x).0)
    }

    /// One encoder layer applied to `h (T x d)`.
    pub fn encoder_layer(&self, h: &Matrix<F>, layer: usize) -> Result<Matrix<F>, NnError> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| NnError::Config(format!("no encoder layer {layer}")))?;
        if h.cols != self.cfg.model_dim {
            return Err(NnError::Shape {
                tensor: format!("encoder.{layer}.input"),
                expected: vec![h.rows, self.cfg.model_dim],
                found: vec![h.rows, h.cols],
            });
        }
        Ok(l.forward(h, self.cfg.num_heads).0)
    }

    /// Attention weights of every head of `layer` for input `h`.
    pub fn attention_weights(&self, h: &Matrix<F>, layer: usize) -> Result<Vec<Matrix<F>>, NnError> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| NnError::Config(format!("no encoder layer {layer}")))?;
        let (n1, _) = l.norm1.forward(h);
        Ok(l.attention(&n1, self.cfg.num_heads).1.weights)
    }

    pub fn forward_cached(&self, x: &Matrix<F>) -> Result<(Vec<F>, ForwardCache<F>), NnError> {
        self.check_input(x)?;
        let t = x.rows;
        let (mut h, extractor) = self.extract_cached(x);
        for r in 0..t {
            for (v, &p) in h.row_mut(r).iter_mut().zip(self.pos_embedding.row(r)) {
                *v += p;
            }
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (out, cache) = l.forward(&h, self.cfg.num_heads);
            h = out;
            layers.push(cache);
        }
        let pooled = Matrix::from_vec(1, h.cols, h.mean_rows());
        let logits = self.head.forward(&pooled).data;
        Ok((
            logits,
            ForwardCache {
                extractor,
                layers,
                frames: t,
                pooled,
            },
        ))
    }

    pub fn forward_matrix(&self, x: &Matrix<F>) -> Result<Vec<F>, NnError> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Logits for one preprocessed sample.
    pub fn logits(&self, x: &FeatureTensor) -> Result<Vec<F>, NnError> {
        self.forward_matrix(&feature_matrix(x))
    }

    /// Backpropagates `dlogits` and accumulates parameter gradients into `grad`.
    pub fn backward(&self, cache: &ForwardCache<F>, dlogits: &[F], grad: &mut Network<F>) {
        let dl = Matrix::from_vec(1, dlogits.len(), dlogits.to_vec());
        let dpooled = self.head.backward(&cache.pooled, &dl, &mut grad.head);
        let t = cache.frames;
        let inv_t = F::one() / F::of(t as f64);
        let mut dh = Matrix::zeros(t, self.cfg.model_dim);
        for r in 0..t {
            for (d, &p) in dh.row_mut(r).iter_mut().zip(&dpooled.data) {
                *d = p * inv_t;
            }
        }
        for (l, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            dh = layer.backward(lc, &dh, &mut grad.layers[l]);
        }
        for r in 0..t {
            for (g, &d) in grad.pos_embedding.row_mut(r).iter_mut().zip(dh.row(r)) {
                *g += d;
            }
        }
        for (i, (stage, sc)) in self.extractor.iter().zip(&cache.extractor).enumerate().rev() {
            relu_backward_in_place(&sc.activated, &mut dh);
            let dz = stage.norm.backward(&sc.norm, &dh, &mut grad.extractor[i].norm);
            let g = &mut grad.extractor[i].dense;
            if i == 0 {
                // input gradient is never needed
                matmul_at_b_acc(&sc.input, &dz, &mut g.weight);
                for r in 0..dz.rows {
                    for (b, &d) in g.bias.iter_mut().zip(dz.row(r)) {
                        *b += d;
                    }
                }
            } else {
                dh = stage.dense.backward(&sc.input, &dz, g);
            }
        }
    }
}

pub fn feature_matrix<F: Real>(x: &FeatureTensor) -> Matrix<F> {
    Matrix::from_vec(x.frames, x.dim, x.data.iter().map(|&v| F::of(v as f64)).collect())
}
