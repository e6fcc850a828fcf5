//! Named parameter collections.
//!
//! A [`ParameterSet`] is the unit the federation layer works with: every
//! detector exposes its weights as named matrices, and aggregation, proximal
//! penalties, and control variates are all expressed as arithmetic over
//! whole sets. Entries are kept in a `BTreeMap` so iteration order — and
//! therefore every floating-point accumulation order — is deterministic.
//!
//! Entries whose name starts with `_` are auxiliary state (for example
//! scoring statistics calibrated after training). They ride along with the
//! set but are not trainable: optimizers and penalties skip them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Prefix marking auxiliary (non-trainable) entries.
pub const AUX_PREFIX: char = '_';

/// An ordered, named collection of parameter matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    entries: BTreeMap<String, Matrix>,
}

impl ParameterSet {
    /// An empty set.
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace an entry.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.entries.insert(name.into(), value);
    }

    /// Remove an entry, returning it if present.
    pub fn remove(&mut self, name: &str) -> Option<Matrix> {
        self.entries.remove(name)
    }

    /// Look up an entry.
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name)
    }

    /// Look up an entry mutably.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name)
    }

    /// Entry names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// (name, matrix) pairs in sorted name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Mutable (name, matrix) pairs in sorted name order.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True if the set has no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True if `name` marks auxiliary (non-trainable) state.
    pub fn is_aux(name: &str) -> bool {
        name.starts_with(AUX_PREFIX)
    }

    /// Trainable (name, matrix) pairs in sorted name order.
    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.iter().filter(|(name, _)| !Self::is_aux(name))
    }

    /// Total scalar count across trainable entries.
    pub fn num_trainable_scalars(&self) -> usize {
        self.trainable().map(|(_, m)| m.len()).sum()
    }

    /// A copy with every entry replaced by zeros of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    /// Check that `other` has exactly the same entry names and shapes.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        for (name, m) in &self.entries {
            match other.entries.get(name) {
                None => {
                    return Err(Error::Aggregation {
                        entry: name.clone(),
                        reason: "missing from other set".into(),
                    })
                }
                Some(o) if o.shape() != m.shape() => {
                    return Err(Error::Aggregation {
                        entry: name.clone(),
                        reason: format!(
                            "shape mismatch: {:?} vs {:?}",
                            m.shape(),
                            o.shape()
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = other.entries.keys().find(|k| !self.entries.contains_key(*k)) {
            return Err(Error::Aggregation {
                entry: extra.clone(),
                reason: "unexpected extra entry".into(),
            });
        }
        Ok(())
    }

    /// Entry-wise combination of two compatible sets.
    pub fn map2(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.zip(&other.entries[k], &f)))
                .collect(),
        })
    }

    /// Entry-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.map2(other, |a, b| a + b)
    }

    /// Entry-wise difference.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.map2(other, |a, b| a - b)
    }

    /// Every entry multiplied by `s`.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.scale(s)))
                .collect(),
        }
    }

    /// In-place `self += a * x` over all entries.
    pub fn axpy(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        for (name, m) in &mut self.entries {
            let xm = &x.entries[name];
            let data = m.as_mut_slice();
            for (d, &xv) in data.iter_mut().zip(xm.as_slice()) {
                *d += a * xv;
            }
        }
        Ok(())
    }

    /// Squared L2 distance over trainable entries:
    /// `Σ (w_i - v_i)²` with auxiliary entries excluded.
    pub fn l2_distance_sq(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut total = 0.0;
        for (name, m) in self.trainable() {
            let o = &other.entries[name];
            for (a, b) in m.as_slice().iter().zip(o.as_slice()) {
                let d = a - b;
                total += d * d;
            }
        }
        Ok(total)
    }

    /// Largest absolute difference across all entries of two compatible sets.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut worst = 0.0f64;
        for (name, m) in &self.entries {
            worst = worst.max(m.max_abs_diff(&other.entries[name]));
        }
        Ok(worst)
    }

    /// True if every entry of every matrix is finite.
    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Matrix::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w1", Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        p.insert("b1", Matrix::row_vector(&[0.5, -0.5]));
        p.insert("_stat", Matrix::row_vector(&[9.0]));
        p
    }

    #[test]
    fn iteration_is_name_sorted() {
        let p = sample();
        let names: Vec<&str> = p.names().collect();
        assert_eq!(names, vec!["_stat", "b1", "w1"]);
    }

    #[test]
    fn trainable_skips_aux_entries() {
        let p = sample();
        let names: Vec<&str> = p.trainable().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["b1", "w1"]);
        assert_eq!(p.num_trainable_scalars(), 6);
    }

    #[test]
    fn set_algebra() {
        let p = sample();
        let doubled = p.add(&p).unwrap();
        assert_eq!(doubled, p.scale(2.0));

        let mut q = p.clone();
        q.axpy(-1.0, &p).unwrap();
        assert_eq!(q, p.zeros_like());

        let diff = doubled.sub(&p).unwrap();
        assert!(diff.max_abs_diff(&p).unwrap() < 1e-15);
    }

    #[test]
    fn l2_distance_ignores_aux() {
        let p = sample();
        let mut q = p.clone();
        // Perturb an aux entry: distance must not change.
        q.get_mut("_stat").unwrap().set(0, 0, 1234.0);
        assert_eq!(p.l2_distance_sq(&q).unwrap(), 0.0);
        // Perturb a trainable entry by 3: squared distance is 9.
        q.get_mut("b1").unwrap().set(0, 1, 2.5);
        assert!((p.l2_distance_sq(&q).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn incompatible_sets_are_rejected() {
        let p = sample();
        let mut missing = p.clone();
        missing.remove("b1");
        assert!(p.add(&missing).is_err());

        let mut reshaped = p.clone();
        reshaped.insert("b1", Matrix::zeros(2, 2));
        assert!(p.add(&reshaped).is_err());

        let mut extra = p.clone();
        extra.insert("zz", Matrix::zeros(1, 1));
        assert!(p.add(&extra).is_err());
    }

    #[test]
    fn serde_round_trip_preserves_entries() {
        let p = sample();
        let json = serde_json::to_string(&p).unwrap();
        let back: ParameterSet = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}
