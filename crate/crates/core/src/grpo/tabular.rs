//! Surrogate objective and its gradient for [`TabularPolicy`].

use serde::{Deserialize, Serialize};

use super::{clip, clipped_token_objective, prob_ratio, ClipConfig, GrpoError};
use crate::policy::{log_softmax, Table, TabularPolicy};
use crate::scalar::Scalar;

/// One sampled token with the data needed to re-evaluate its ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStep<T> {
    pub state: usize,
    pub action: usize,
    /// Log-probability under the sampling policy, frozen at sampling time.
    pub logp_old: Option<T>,
    pub advantage: T,
}

/// Retained sequences grouped by input: `groups[g][i][t]`.
///
/// The objective is the sum over groups of each group's token-mean surrogate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TabularBatch<T> {
    pub groups: Vec<Vec<Vec<PolicyStep<T>>>>,
}

impl<T: Scalar> TabularBatch<T> {
    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.iter().all(Vec::is_empty))
    }

    pub fn token_count(&self) -> usize {
        self.groups.iter().flatten().map(Vec::len).sum()
    }

    fn validate(&self) -> Result<(), GrpoError> {
        if self.groups.is_empty() || self.groups.iter().any(Vec::is_empty) {
            return Err(GrpoError::EmptyBatch);
        }
        for (i, seq) in self.groups.iter().flatten().enumerate() {
            if seq.is_empty() {
                return Err(GrpoError::EmptySequence(i));
            }
            if let Some(position) = seq.iter().position(|s| s.logp_old.is_none()) {
                return Err(GrpoError::MissingOldLogProb { sequence: i, position });
            }
        }
        Ok(())
    }
}

/// Value of the surrogate at the current policy parameters.
pub fn surrogate_objective<T: Scalar>(
    policy: &TabularPolicy<T>,
    batch: &TabularBatch<T>,
    cfg: &ClipConfig<T>,
) -> Result<T, GrpoError> {
    batch.validate()?;
    let mut total = T::zero();
    for group in &batch.groups {
        let n = T::from_count(group.iter().map(Vec::len).sum());
        let mut sum = T::zero();
        for step in group.iter().flatten() {
            let logp = policy.log_prob(step.state, step.action);
            let r = prob_ratio(logp, step.logp_old.unwrap_or(logp))?;
            sum = sum + clipped_token_objective(r, step.advantage, cfg);
        }
        total = total + sum / n;
    }
    Ok(total)
}

/// Exact gradient of [`surrogate_objective`] with respect to every logit.
///
/// A token contributes `(Â·r/N)·(onehot(a) − softmax(s))` at its state `s`
/// when the unclipped branch of the `min` is active, and nothing otherwise.
/// At the on-policy point (`r = 1`) this reduces to `(Â/N)·(onehot − p)`.
pub fn surrogate_gradient_tabular<T: Scalar>(
    policy: &TabularPolicy<T>,
    batch: &TabularBatch<T>,
    cfg: &ClipConfig<T>,
) -> Result<Table<T>, GrpoError> {
    batch.validate()?;
    let mut grad = Table::zeros(policy.logits().n_states(), policy.vocab_size());
    for group in &batch.groups {
        let n = T::from_count(group.iter().map(Vec::len).sum());
        for step in group.iter().flatten() {
            let logps = log_softmax(policy.logits().row(step.state));
            let logp = logps[step.action];
            let r = prob_ratio(logp, step.logp_old.unwrap_or(logp))?;
            let a = step.advantage;
            if a == T::zero() || r * a > clip(r, cfg) * a {
                continue;
            }
            let coef = a * r / n;
            let row = grad.row_mut(step.state);
            for (k, (g, lp)) in row.iter_mut().zip(&logps).enumerate() {
                let indicator = if k == step.action { T::one() } else { T::zero() };
                *g = *g + coef * (indicator - lp.exp());
            }
        }
    }
    Ok(grad)
}

/// Central differences of [`surrogate_objective`], one parameter at a time.
/// Old log-probabilities stay frozen while the logits move.
pub fn finite_diff_gradient<T: Scalar>(
    policy: &TabularPolicy<T>,
    batch: &TabularBatch<T>,
    cfg: &ClipConfig<T>,
    h: T,
) -> Result<Table<T>, GrpoError> {
    if !(h > T::zero()) {
        return Err(GrpoError::Config(format!("finite-difference step must be positive, got {h}")));
    }
    batch.validate()?;
    let mut probe = policy.clone();
    let mut grad = Table::zeros(policy.logits().n_states(), policy.vocab_size());
    let two_h = h + h;
    for k in 0..probe.logits().as_slice().len() {
        let original = probe.logits().as_slice()[k];
        probe.logits_mut().as_mut_slice()[k] = original + h;
        let plus = surrogate_objective(&probe, batch, cfg)?;
        probe.logits_mut().as_mut_slice()[k] = original - h;
        let minus = surrogate_objective(&probe, batch, cfg)?;
        probe.logits_mut().as_mut_slice()[k] = original;
        grad.as_mut_slice()[k] = (plus - minus) / two_h;
    }
    Ok(grad)
}
