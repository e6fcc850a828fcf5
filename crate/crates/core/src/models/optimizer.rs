//! Gradient-descent optimizers over [`ParameterSet`] entries.
//!
//! Adam is the training default; plain SGD is kept for tests that need the
//! update to equal `-lr * gradient` exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::params::ParameterSet;

/// Optimizer selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Adaptive moment estimation (β₁ 0.9, β₂ 0.999, ε 1e-8).
    Adam,
    /// Vanilla stochastic gradient descent.
    Sgd,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Per-entry Adam accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamSlot {
    m: Matrix,
    v: Matrix,
    t: u64,
}

/// Mutable optimizer state carried across epochs and rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    kind: OptimizerKind,
    slots: BTreeMap<String, AdamSlot>,
}

impl OptState {
    /// Fresh state for the given optimizer.
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            slots: BTreeMap::new(),
        }
    }

    /// The optimizer this state belongs to.
    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Apply one update step to every entry named in `grads`.
    ///
    /// Entries absent from `grads` (not part of the current phase) are left
    /// untouched, as are their accumulators and step counters.
    pub fn apply(&mut self, params: &mut ParameterSet, grads: &BTreeMap<String, Matrix>, lr: f64) {
        for (name, g) in grads {
            let w = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown entry '{name}'"));
            assert_eq!(w.shape(), g.shape(), "gradient shape mismatch for '{name}'");
            match self.kind {
                OptimizerKind::Sgd => {
                    let data = w.as_mut_slice();
                    for (d, &gv) in data.iter_mut().zip(g.as_slice()) {
                        *d -= lr * gv;
                    }
                }
                OptimizerKind::Adam => {
                    let slot = self.slots.entry(name.clone()).or_insert_with(|| AdamSlot {
                        m: Matrix::zeros(g.rows(), g.cols()),
                        v: Matrix::zeros(g.rows(), g.cols()),
                        t: 0,
                    });
                    slot.t += 1;
                    let bc1 = 1.0 - BETA1.powi(slot.t as i32);
                    let bc2 = 1.0 - BETA2.powi(slot.t as i32);
                    let data = w.as_mut_slice();
                    for i in 0..data.len() {
                        let gv = g.as_slice()[i];
                        let m = BETA1 * slot.m.as_slice()[i] + (1.0 - BETA1) * gv;
                        let v = BETA2 * slot.v.as_slice()[i] + (1.0 - BETA2) * gv * gv;
                        slot.m.as_mut_slice()[i] = m;
                        slot.v.as_mut_slice()[i] = v;
                        data[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_entry(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Matrix::filled(1, 2, v));
        p
    }

    fn grad(v: f64) -> BTreeMap<String, Matrix> {
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Matrix::filled(1, 2, v));
        g
    }

    #[test]
    fn sgd_step_is_exactly_minus_lr_grad() {
        let mut p = one_entry(1.0);
        let mut s = OptState::new(OptimizerKind::Sgd);
        s.apply(&mut p, &grad(0.5), 0.1);
        assert_eq!(p.get("w").unwrap().as_slice(), &[0.95, 0.95]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_gradient_sign() {
        // With bias correction, step 1 gives m̂ = g, v̂ = g², so the update
        // is lr · g/(|g| + ε) ≈ lr · sign(g).
        let mut p = one_entry(1.0);
        let mut s = OptState::new(OptimizerKind::Adam);
        s.apply(&mut p, &grad(0.5), 0.001);
        let got = p.get("w").unwrap().get(0, 0);
        assert!((got - (1.0 - 0.001)).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn adam_state_persists_between_calls() {
        let mut p = one_entry(0.0);
        let mut s = OptState::new(OptimizerKind::Adam);
        s.apply(&mut p, &grad(1.0), 0.01);
        let after_one = p.get("w").unwrap().get(0, 0);
        s.apply(&mut p, &grad(1.0), 0.01);
        let after_two = p.get("w").unwrap().get(0, 0);
        // Constant gradient keeps pushing the same way.
        assert!(after_two < after_one && after_one < 0.0);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = one_entry(2.0);
            let before = p.clone();
            let mut s = OptState::new(kind);
            s.apply(&mut p, &grad(3.0), 0.0);
            assert_eq!(p, before);
        }
    }

    #[test]
    fn entries_without_gradients_are_untouched() {
        let mut p = one_entry(1.0);
        p.insert("frozen", Matrix::filled(1, 1, 7.0));
        let mut s = OptState::new(OptimizerKind::Sgd);
        s.apply(&mut p, &grad(1.0), 0.5);
        assert_eq!(p.get("frozen").unwrap().get(0, 0), 7.0);
        assert_eq!(p.get("w").unwrap().get(0, 0), 0.5);
    }
}
