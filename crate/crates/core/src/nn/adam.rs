use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One trainable tensor paired with its gradient.
pub struct ParamSlot<'a, T> {
    pub owner: &'static str,
    pub layer: usize,
    pub is_bias: bool,
    pub values: &'a mut [T],
    pub grads: &'a [T],
}

impl<T> ParamSlot<'_, T> {
    pub fn name(&self) -> String {
        format!(
            "{} layer {} {}",
            self.owner,
            self.layer,
            if self.is_bias { "bias" } else { "weights" }
        )
    }
}

/// Adam moments and coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one bias-corrected update to every slot.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, slots: &mut [ParamSlot<'_, T>]) -> Result<()> {
        for s in slots.iter() {
            if s.values.len() != s.grads.len() {
                return Err(Error::shape(s.name(), s.values.len(), s.grads.len()));
            }
            if s.grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { parameter: s.name() });
            }
        }
        if self.first.is_empty() {
            self.first = slots.iter().map(|s| vec![T::zero(); s.values.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != slots.len()
            || self.first.iter().zip(slots.iter()).any(|(m, s)| m.len() != s.values.len())
        {
            return Err(Error::invalid("adam state does not match the parameter layout"));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let c1 = T::one() - T::lit(self.beta1.powi(t));
        let c2 = T::one() - T::lit(self.beta2.powi(t));
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(self.epsilon);
        for ((s, m), v) in slots.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for (((p, &g), mi), vi) in s.values.iter_mut().zip(s.grads).zip(m).zip(v) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(slots: &mut [ParamSlot<'_, T>], state: &mut AdamState<T>) -> Result<()> {
    state.step(slots)
}
