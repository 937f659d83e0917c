//! Named parameter tensors, seeded initialization and the `SGNW` container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SGNW" | u32 version=1 | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 payload[prod(dims)]
//! ```

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::NnError;

pub const MAGIC: &[u8; 4] = b"SGNW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Insertion-ordered map of named tensors.
#[derive(Debug, Clone, Default)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl PartialEq for WeightStore {
    /// Bitwise comparison of every tensor, in order.
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::Format(format!("duplicate tensor name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total element count over all tensors.
    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        let mut out = Vec::with_capacity(12 + self.num_elements() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            let len = u16::try_from(name.len())
                .map_err(|_| NnError::Format(format!("tensor name too long: {} bytes", name.len())))?;
            let rank = u8::try_from(t.shape.len())
                .map_err(|_| NnError::Format(format!("tensor `{name}` rank too large")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for &d in &t.shape {
                let d = u32::try_from(d).map_err(|_| NnError::Format(format!("dimension {d} too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Format("bad magic, expected SGNW".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| NnError::Format(format!("tensor `{name}` shape overflows")))?;
            let byte_len = numel
                .checked_mul(4)
                .ok_or_else(|| NnError::Format(format!("tensor `{name}` shape overflows")))?;
            let payload = r.take(byte_len).map_err(|_| {
                NnError::Format(format!("tensor `{name}` payload shorter than its shape {shape:?}"))
            })?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(name, Tensor::new(shape, data))?;
        }
        if r.pos != bytes.len() {
            return Err(NnError::Format(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_weights(store: &WeightStore, path: &Path) -> Result<(), NnError> {
    let bytes = store.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| NnError::Io(path.display().to_string(), e))
}

pub fn load_weights(path: &Path) -> Result<WeightStore, NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Io(path.display().to_string(), e))?;
    WeightStore::from_bytes(&bytes)
}

/// Seeded initialization: dense weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// biases 0, LayerNorm gains 1, positional embedding `N(0, 0.02)`.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> Result<WeightStore, NnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0f32, 0.02).expect("valid normal");
    let mut store = WeightStore::new();
    for spec in cfg.param_layout() {
        let n = spec.numel();
        let data: Vec<f32> = if spec.name == "pos_embedding" {
            (0..n).map(|_| pos.sample(&mut rng)).collect()
        } else if spec.name.ends_with(".gain") {
            vec![1.0; n]
        } else if spec.name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let bound = (1.0 / spec.shape[0] as f64).sqrt() as f32;
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        store.insert(spec.name, Tensor::new(spec.shape, data))?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig::tiny(6, 3)
    }

    #[test]
    fn init_is_seeded() {
        let cfg = small();
        assert_eq!(init_weights(&cfg, 5).unwrap(), init_weights(&cfg, 5).unwrap());
        assert_ne!(init_weights(&cfg, 5).unwrap(), init_weights(&cfg, 6).unwrap());
    }

    #[test]
    fn init_matches_layout() {
        let cfg = small();
        let store = init_weights(&cfg, 1).unwrap();
        let layout = cfg.param_layout();
        assert_eq!(store.len(), layout.len());
        for spec in layout {
            let t = store.get(&spec.name).unwrap();
            assert_eq!(t.shape, spec.shape, "{}", spec.name);
        }
        let g = store.get("encoder.0.norm1.gain").unwrap();
        assert!(g.data.iter().all(|&v| v == 1.0));
        let b = store.get("head.bias").unwrap();
        assert!(b.data.iter().all(|&v| v == 0.0));
        let w = store.get("extractor.0.dense.weight").unwrap();
        let bound = (1.0f32 / 6.0).sqrt();
        assert!(w.data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn bytes_round_trip() {
        let store = init_weights(&small(), 9).unwrap();
        let back = WeightStore::from_bytes(&store.to_bytes().unwrap()).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let store = init_weights(&small(), 9).unwrap();
        let bytes = store.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WeightStore::from_bytes(&bad), Err(NnError::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(WeightStore::from_bytes(&bad), Err(NnError::Format(_))));

        assert!(matches!(
            WeightStore::from_bytes(&bytes[..bytes.len() - 1]),
            Err(NnError::Format(_))
        ));
        assert!(matches!(WeightStore::from_bytes(&bytes[..3]), Err(NnError::Format(_))));
    }

    #[test]
    fn shape_header_disagreeing_with_payload() {
        let mut s = WeightStore::new();
        s.insert("a", Tensor::new(vec![2], vec![1.0, 2.0])).unwrap();
        let mut bytes = s.to_bytes().unwrap();
        // dims[0] sits after magic, version, count, name_len, name, rank
        let dim_at = 4 + 4 + 4 + 2 + 1 + 1;
        bytes[dim_at] = 3;
        assert!(matches!(WeightStore::from_bytes(&bytes), Err(NnError::Format(_))));
        bytes[dim_at] = 1;
        assert!(matches!(WeightStore::from_bytes(&bytes), Err(NnError::Format(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = WeightStore::new();
        s.insert("a", Tensor::new(vec![1], vec![0.0])).unwrap();
        assert!(s.insert("a", Tensor::new(vec![1], vec![0.0])).is_err());
    }
}
