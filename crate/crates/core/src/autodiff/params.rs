use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Named collection of matrices. Used both for learnable weights and for the
/// gradients that mirror them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    entries: BTreeMap<String, Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Option<Matrix> {
        self.entries.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name)
    }

    /// Like [`get`](Self::get) but reports the missing name.
    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Matrix::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    /// `self += scale * other`, requiring identical layout.
    pub fn accumulate(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape(
                "accumulate",
                "parameter sets differ in names or shapes",
            ));
        }
        for (dst, src) in self.entries.values_mut().zip(other.entries.values()) {
            for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *d += scale * s;
            }
        }
        Ok(())
    }
}

impl FromIterator<(String, Matrix)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Matrix)>>(iter: I) -> Self {
        ParamSet {
            entries: iter.into_iter().collect(),
        }
    }
}
