//! Named parameter storage and the Adam update.
//!
//! Parameters are kept in a `BTreeMap` so every iteration order (updates,
//! checkpoints, parameter counts) is the sorted name order, independent of
//! insertion order.

use std::collections::BTreeMap;

use super::element::Element;
use super::tape::{Gradients, NodeId, Tape};
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot<E: Element> {
    value: Tensor<E>,
    m: Tensor<E>,
    v: Tensor<E>,
}

pub struct ParamStore<E: Element> {
    slots: BTreeMap<String, Slot<E>>,
    step: u64,
}

impl<E: Element> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        Self {
            slots: BTreeMap::new(),
            step: 0,
        }
    }

    /// Registers a parameter, resetting its optimizer moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<E>) {
        let (m, v) = (Tensor::zeros(value.shape()), Tensor::zeros(value.shape()));
        self.slots.insert(name.into(), Slot { value, m, v });
    }

    /// Registers a parameter together with restored optimizer moments.
    pub fn insert_with_moments(
        &mut self,
        name: impl Into<String>,
        value: Tensor<E>,
        m: Tensor<E>,
        v: Tensor<E>,
    ) -> Result<(), NnError> {
        if m.shape() != value.shape() || v.shape() != value.shape() {
            return Err(NnError::ShapeMismatch {
                op: "insert_with_moments",
                detail: format!(
                    "value {:?}, m {:?}, v {:?}",
                    value.shape(),
                    m.shape(),
                    v.shape()
                ),
            });
        }
        self.slots.insert(name.into(), Slot { value, m, v });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<E>> {
        self.slots.get(name).map(|s| &s.value)
    }

    /// Direct mutation; used by the finite-difference checker to nudge one
    /// scalar at a time. Does not touch optimizer moments.
    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor<E>> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor<E>, &Tensor<E>)> {
        self.slots.get(name).map(|s| (&s.m, &s.v))
    }

    /// Names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.slots.values().map(|s| s.value.numel()).sum()
    }

    /// Number of optimizer steps applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Copies a stored parameter onto a tape as a differentiable node.
    pub fn tape_param(&self, tape: &mut Tape<E>, name: &str) -> Result<NodeId, NnError> {
        let slot = self
            .slots
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        tape.param(name, slot.value.clone())
    }

    /// One Adam step. Gradients for names not in the store are an error;
    /// stored parameters without a gradient decay their moments toward zero.
    pub fn adam_step(&mut self, grads: &Gradients<E>, cfg: &AdamConfig) -> Result<(), NnError> {
        for name in grads.by_name.keys() {
            if !self.slots.contains_key(name) {
                return Err(NnError::UnknownParam(name.clone()));
            }
        }
        self.step += 1;
        let b1 = E::from_f64(cfg.beta1);
        let b2 = E::from_f64(cfg.beta2);
        let one_m_b1 = E::from_f64(1.0 - cfg.beta1);
        let one_m_b2 = E::from_f64(1.0 - cfg.beta2);
        let eps = E::from_f64(cfg.eps);
        // Bias-corrected step size, folded into one scalar.
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let alpha = E::from_f64(cfg.lr / bc1);
        let inv_sqrt_bc2 = E::from_f64(1.0 / bc2.sqrt());

        for (name, slot) in &mut self.slots {
            let grad = grads.get(name);
            if let Some(g) = grad {
                if g.shape() != slot.value.shape() {
                    return Err(NnError::ShapeMismatch {
                        op: "adam_step",
                        detail: format!(
                            "grad {:?} vs param {name:?} {:?}",
                            g.shape(),
                            slot.value.shape()
                        ),
                    });
                }
            }
            let n = slot.value.numel();
            for i in 0..n {
                let g = grad.map_or(E::ZERO, |g| g.data()[i]);
                let m = b1 * slot.m.data()[i] + one_m_b1 * g;
                let v = b2 * slot.v.data()[i] + one_m_b2 * g * g;
                slot.m.data_mut()[i] = m;
                slot.v.data_mut()[i] = v;
                let update = alpha * m / ((v.sqrt() * inv_sqrt_bc2) + eps);
                slot.value.data_mut()[i] = slot.value.data()[i] - update;
            }
            if !slot.value.all_finite() {
                return Err(NnError::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}
