//! Named parameter store and the binary checkpoint format.
//!
//! Checkpoint layout: magic `C2CM`, u32 version, then one record per
//! parameter: u32 name length, UTF-8 name, u32 rank, rank u32 dims, and the
//! values as little-endian f32.

use std::io::Write as _;
use std::path::Path;

use super::tape::{ModelError, Tape, TensorRef};
use crate::rng::{derive_seed, Rng};

const CHECKPOINT_MAGIC: &[u8; 4] = b"C2CM";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, ParamTensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, tensor: ParamTensor) {
        debug_assert!(self.position(name).is_none(), "duplicate parameter {name}");
        self.entries.push((name.to_string(), tensor));
    }

    /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] with a seed derived
    /// from the set seed and the insertion index.
    pub fn insert_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) {
        let mut rng = Rng::new(derive_seed(seed, &[self.entries.len() as u64]));
        let limit = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.uniform_in(-limit, limit)).collect();
        self.insert(
            name,
            ParamTensor {
                shape: shape.to_vec(),
                values,
            },
        );
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &ParamTensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensor_at(&self, index: usize) -> &ParamTensor {
        &self.entries[index].1
    }

    pub fn tensor_at_mut(&mut self, index: usize) -> &mut ParamTensor {
        &mut self.entries[index].1
    }

    pub fn name_at(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
            for &d in &tensor.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &tensor.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 8 || &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("missing C2CM magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unknown version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut pos = 8usize;
        let mut set = ParamSet::new();
        while pos < bytes.len() {
            let take_u32 = |pos: &mut usize| -> Result<u32, ModelError> {
                if *pos + 4 > bytes.len() {
                    return Err(ModelError::Checkpoint("truncated record".into()));
                }
                let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
                *pos += 4;
                Ok(v)
            };
            let name_len = take_u32(&mut pos)? as usize;
            if pos + name_len > bytes.len() {
                return Err(ModelError::Checkpoint("truncated name".into()));
            }
            let name = std::str::from_utf8(&bytes[pos..pos + name_len])
                .map_err(|_| ModelError::Checkpoint("name is not UTF-8".into()))?
                .to_string();
            pos += name_len;
            let rank = take_u32(&mut pos)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(take_u32(&mut pos)? as usize);
            }
            let n: usize = shape.iter().product();
            if pos + n * 4 > bytes.len() {
                return Err(ModelError::Checkpoint(format!(
                    "truncated payload for {name}"
                )));
            }
            let values = bytes[pos..pos + n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            pos += n * 4;
            set.entries.push((name, ParamTensor { shape, values }));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        ParamSet::from_bytes(&bytes)
    }
}

/// Parameters of one [`ParamSet`] inserted into a tape as gradient-bearing
/// leaves, aligned with the set's entry order.
pub struct BoundParams {
    refs: Vec<TensorRef>,
    names: Vec<String>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        let mut refs = Vec::with_capacity(params.len());
        let mut names = Vec::with_capacity(params.len());
        for (name, tensor) in params.iter() {
            refs.push(tape.leaf(&tensor.shape, tensor.values.clone(), true));
            names.push(name.to_string());
        }
        BoundParams { refs, names }
    }

    pub fn get(&self, name: &str) -> TensorRef {
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.refs[i],
            None => panic!("unbound parameter {name}"),
        }
    }

    pub fn refs(&self) -> &[TensorRef] {
        &self.refs
    }
}
