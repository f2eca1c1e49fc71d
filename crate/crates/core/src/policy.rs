//! Tabular softmax policy over a small vocabulary.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense `states × actions` table, used for both logits and gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> Table<T> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![T::zero(); n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[T] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [T] {
        &mut self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> T {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: T) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Table<T>, scale: T) {
        assert_eq!((self.n_states, self.n_actions), (other.n_states, other.n_actions), "table shape mismatch");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + scale * b;
        }
    }

    pub fn l2_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax of one logit row.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().fold(T::zero(), |a, &l| a + (l - max).exp()).ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

/// Next-token distribution per `(input, position)` state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy<T> {
    logits: Table<T>,
    max_length: usize,
}

impl<T: Scalar> TabularPolicy<T> {
    /// Uniform policy for `n_inputs` inputs, `max_length` positions each.
    pub fn uniform(n_inputs: usize, max_length: usize, vocab_size: usize) -> Self {
        assert!(max_length > 0 && vocab_size > 0, "policy needs at least one position and one token");
        Self { logits: Table::zeros(n_inputs * max_length, vocab_size), max_length }
    }

    pub fn from_logits(logits: Table<T>, max_length: usize) -> Self {
        assert!(max_length > 0 && logits.n_states() % max_length == 0, "state count must be a multiple of max_length");
        Self { logits, max_length }
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn n_inputs(&self) -> usize {
        self.logits.n_states() / self.max_length
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.n_actions()
    }

    pub fn state(&self, input: usize, position: usize) -> usize {
        debug_assert!(position < self.max_length && input < self.n_inputs());
        input * self.max_length + position
    }

    pub fn logits(&self) -> &Table<T> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Table<T> {
        &mut self.logits
    }

    pub fn probs(&self, state: usize) -> Vec<T> {
        softmax(self.logits.row(state))
    }

    pub fn log_probs(&self, state: usize) -> Vec<T> {
        log_softmax(self.logits.row(state))
    }

    pub fn log_prob(&self, state: usize, action: usize) -> T {
        self.log_probs(state)[action]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_rows() {
        let p = TabularPolicy::<f64>::uniform(2, 3, 4);
        assert_eq!(p.n_inputs(), 2);
        assert_eq!(p.state(1, 2), 5);
        assert_eq!(p.probs(5), vec![0.25; 4]);
    }

    #[test]
    fn degenerate_logits() {
        let p = softmax(&[1e6, 0.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert_eq!(log_softmax(&[1e6, 0.0])[0], 0.0);
    }

    #[test]
    fn works_in_f32() {
        let p = softmax(&[0.0f32, 0.0]);
        assert_eq!(p, vec![0.5f32, 0.5]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(row in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let s: f64 = softmax(&row).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            let ls = log_softmax(&row);
            for (p, l) in softmax(&row).iter().zip(&ls) {
                prop_assert!((p.ln() - l).abs() <= 1e-9 || *p == 0.0);
            }
        }
    }
}
