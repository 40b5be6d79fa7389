//! Named parameter storage and the JSON checkpoint format.
//!
//! A checkpoint is a single JSON object:
//!
//! ```json
//! {
//!   "format": "pmrl-params",
//!   "version": 1,
//!   "params": [
//!     { "name": "conv1/w", "shape": [8, 1, 3], "data": [0.01, -0.02, ...] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Records appear in ascending name order. Numbers are written in the
//! shortest form that round-trips to the identical `f64`, so saving and
//! loading is lossless and two saves of the same store are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pmrl-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: Vec<Record>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Fails unless `other` holds exactly the same names with the same shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        let mut problems = Vec::new();
        for (name, t) in &self.tensors {
            match other.tensors.get(name) {
                None => problems.push(format!("`{name}` missing (expected shape {:?})", t.shape())),
                Some(o) if o.shape() != t.shape() => problems.push(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    o.shape(),
                    t.shape()
                )),
                Some(_) => {}
            }
        }
        for name in other.tensors.keys() {
            if !self.tensors.contains_key(name) {
                problems.push(format!("unexpected parameter `{name}`"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Shape {
                node: "checkpoint".into(),
                detail: problems.join("; "),
            })
        }
    }

    /// Flattens all parameters into one vector in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Overwrites all parameters from a flat vector produced by [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                self.scalar_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Parameters whose name starts with `prefix`, renamed to start with `new_prefix`.
    pub fn extract_prefixed(&self, prefix: &str, new_prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(format!("{new_prefix}{rest}"), t.clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: self
                .tensors
                .iter()
                .map(|(name, t)| Record {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(format!(
                "unsupported checkpoint format {} v{}",
                ck.format, ck.version
            ));
        }
        let mut store = ParamStore::new();
        for r in ck.params {
            let t = Tensor::new(r.shape, r.data).map_err(|e| format!("`{}`: {e}", r.name))?;
            if store.tensors.insert(r.name.clone(), t).is_some() {
                return Err(format!("duplicate parameter `{}`", r.name));
            }
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::vector(vec![0.1, -2.5e-17, 3.0]));
        p.insert("a", Tensor::new(vec![1, 2], vec![1.0 / 3.0, f64::MIN_POSITIVE]).unwrap());
        p
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let p = sample();
        let text = p.to_json();
        let q = ParamStore::from_json(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_json());
    }

    #[test]
    fn incompatible_shapes_are_named() {
        let p = sample();
        let mut q = sample();
        q.insert("a", Tensor::zeros(&[2, 1]));
        let err = p.check_compatible(&q).unwrap_err().to_string();
        assert!(err.contains("`a` has shape [2, 1], expected [1, 2]"), "{err}");
    }

    #[test]
    fn flatten_and_assign_are_inverse() {
        let mut p = sample();
        let flat = p.flatten();
        assert_eq!(flat.len(), 5);
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.assign_flat(&doubled).unwrap();
        assert_eq!(p.flatten(), doubled);
    }
}
