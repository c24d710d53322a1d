//! Named flat parameter collections. Iteration order is the name order,
//! so every consumer (optimizer, checkpointing, soft updates) is deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use super::KernelError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    entries: BTreeMap<String, Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter. Names are unique and shapes are fixed afterwards.
    pub fn insert(&mut self, name: &str, value: Mat) -> Result<(), KernelError> {
        if self.entries.contains_key(name) {
            return Err(KernelError::DuplicateParam(name.to_string()));
        }
        if !value.all_finite() {
            return Err(KernelError::NonFinite(format!("param {name}")));
        }
        self.entries.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.entries.get(name)
    }

    /// Overwrite an existing entry; the shape must match.
    pub fn set(&mut self, name: &str, value: Mat) -> Result<(), KernelError> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| KernelError::UnknownParam(name.to_string()))?;
        if !slot.same_shape(&value) {
            return Err(KernelError::ShapeMismatch {
                what: format!("param {name}"),
                expected: (slot.rows, slot.cols),
                got: (value.rows, value.cols),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|m| m.len()).sum()
    }
}

/// target <- tau * target + (1 - tau) * online, elementwise over matching names.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<(), KernelError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(KernelError::InvalidArg(format!("tau {tau} outside [0,1]")));
    }
    if target.len() != online.len() {
        return Err(KernelError::NameMismatch);
    }
    for ((tn, tv), (on, ov)) in target.iter_mut().zip(online.iter()) {
        if tn != on {
            return Err(KernelError::NameMismatch);
        }
        if !tv.same_shape(ov) {
            return Err(KernelError::ShapeMismatch {
                what: format!("soft_update {tn}"),
                expected: (tv.rows, tv.cols),
                got: (ov.rows, ov.cols),
            });
        }
        for (t, o) in tv.data.iter_mut().zip(ov.data.iter()) {
            *t = tau * *t + (1.0 - tau) * *o;
        }
    }
    Ok(())
}
