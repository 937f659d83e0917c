use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NnError;

/// Parameter count the default configuration is sized against.
pub const REFERENCE_PARAMETER_COUNT: usize = 2_562_970;

/// Architecture hyperparameters of the sign classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the dense + LayerNorm + ReLU stages; the last equals `model_dim`.
    pub extractor_dims: Vec<usize>,
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub num_classes: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    /// 2,555,002 parameters for 88 landmarks over 32 frames.
    fn default() -> Self {
        Self {
            input_dim: 176,
            extractor_dims: vec![256],
            model_dim: 256,
            num_layers: 4,
            num_heads: 4,
            ff_dim: 672,
            num_classes: 250,
            max_seq_len: 32,
        }
    }
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

impl ModelConfig {
    /// Small configuration for desk-scale training runs.
    pub fn tiny(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            extractor_dims: vec![32],
            model_dim: 32,
            num_layers: 2,
            num_heads: 4,
            ff_dim: 64,
            num_classes,
            max_seq_len: 16,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::Config(msg));
        let dims = [
            ("input_dim", self.input_dim),
            ("model_dim", self.model_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ff_dim", self.ff_dim),
            ("num_classes", self.num_classes),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.extractor_dims.is_empty() || self.extractor_dims.contains(&0) {
            return bad("extractor_dims must be non-empty and positive".into());
        }
        if self.extractor_dims.last() != Some(&self.model_dim) {
            return bad("last extractor width must equal model_dim".into());
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(path.display().to_string(), e))?;
        let cfg: ModelConfig = serde_json::from_str(&text).map_err(|e| NnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| NnError::Io(path.display().to_string(), e))
    }

    /// Every parameter tensor in canonical order.
    pub fn param_layout(&self) -> Vec<ParamSpec> {
        let d = self.model_dim;
        let mut out = Vec::new();
        let mut width = self.input_dim;
        for (i, &w) in self.extractor_dims.iter().enumerate() {
            out.push(ParamSpec::new(format!("extractor.{i}.dense.weight"), &[width, w]));
            out.push(ParamSpec::new(format!("extractor.{i}.dense.bias"), &[w]));
            out.push(ParamSpec::new(format!("extractor.{i}.norm.gain"), &[w]));
            out.push(ParamSpec::new(format!("extractor.{i}.norm.bias"), &[w]));
            width = w;
        }
        out.push(ParamSpec::new("pos_embedding", &[self.max_seq_len, d]));
        for l in 0..self.num_layers {
            let p = format!("encoder.{l}");
            out.push(ParamSpec::new(format!("{p}.norm1.gain"), &[d]));
            out.push(ParamSpec::new(format!("{p}.norm1.bias"), &[d]));
            for proj in ["query", "key", "value", "output"] {
                out.push(ParamSpec::new(format!("{p}.attn.{proj}.weight"), &[d, d]));
                out.push(ParamSpec::new(format!("{p}.attn.{proj}.bias"), &[d]));
            }
            out.push(ParamSpec::new(format!("{p}.norm2.gain"), &[d]));
            out.push(ParamSpec::new(format!("{p}.norm2.bias"), &[d]));
            out.push(ParamSpec::new(format!("{p}.ffn.in.weight"), &[d, self.ff_dim]));
            out.push(ParamSpec::new(format!("{p}.ffn.in.bias"), &[self.ff_dim]));
            out.push(ParamSpec::new(format!("{p}.ffn.out.weight"), &[self.ff_dim, d]));
            out.push(ParamSpec::new(format!("{p}.ffn.out.bias"), &[d]));
        }
        out.push(ParamSpec::new("head.weight", &[d, self.num_classes]));
        out.push(ParamSpec::new("head.bias", &[self.num_classes]));
        out
    }
}

fn dense(i: usize, o: usize) -> usize {
    i * o + o
}

fn layer_norm(d: usize) -> usize {
    2 * d
}

/// Closed-form parameter count.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    let d = cfg.model_dim;
    let mut width = cfg.input_dim;
    let mut total = 0;
    for &w in &cfg.extractor_dims {
        total += dense(width, w) + layer_norm(w);
        width = w;
    }
    total += cfg.max_seq_len * d;
    let attention = 4 * dense(d, d);
    let ffn = dense(d, cfg.ff_dim) + dense(cfg.ff_dim, d);
    total += cfg.num_layers * (attention + ffn + 2 * layer_norm(d));
    total + dense(d, cfg.num_classes)
}
