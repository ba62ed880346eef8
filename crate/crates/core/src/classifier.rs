//! Per-class scoring and maximum-score prediction.

use serde::{Deserialize, Serialize};

use crate::generative::{ClassModel, PhiKey};
use crate::network::{instance_to_network, resolve_links, Instance};
use crate::{Error, Result};

/// Probability floor for unknown actions and vanishing relation
/// probabilities.
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Index of the winning class.
    pub label: usize,
    pub log_scores: Vec<f64>,
    /// Top score minus the runner-up, infinite with a single class.
    pub margin: f64,
}

/// Log-score of an instance under one class model.
///
/// The action term sums `ln(sum_t theta[t][a])` over every non-null interval,
/// with actions outside the model vocabulary floored at [`EPSILON`]. The
/// relation term sums `ln phi` over the model's structure links among the
/// first `k*` intervals, with constraints resolved as in training.
pub fn score_instance(model: &ClassModel, instance: &Instance) -> Result<f64> {
    let m = model.num_actions();
    let mut score = 0.0;
    for action in instance.actions().filter(|a| !a.is_null()) {
        let p = match action.vocab_index() {
            Some(i) if i < m => model.theta.iter().map(|row| row[i]).sum::<f64>(),
            _ => EPSILON,
        };
        score += p.max(EPSILON).ln();
    }

    let observed = instance.intervals.iter().take_while(|iv| !iv.is_null()).count();
    let k = observed.min(model.k_star);
    if k < 2 || model.structure.is_empty() {
        return Ok(score);
    }
    let prefix = Instance::new(instance.label, instance.intervals[..k].to_vec());
    let network = instance_to_network(&prefix)?;
    resolve_links(k, &model.structure, |from, to, constraint| {
        let relation = network.relation(from, to).ok_or(Error::EmptyConstraint { from, to })?;
        let key = PhiKey { from_action: network.actions[from], to_action: network.actions[to], constraint };
        score += model.relation_probability(&key, relation).max(EPSILON).ln();
        Ok(relation)
    })?;
    Ok(score)
}

/// Scores an instance under every class and picks the highest, preferring
/// the lowest class index on ties.
pub fn predict(models: &[ClassModel], instance: &Instance) -> Result<Prediction> {
    if models.is_empty() {
        return Err(Error::NoModels);
    }
    let log_scores = models.iter().map(|m| score_instance(m, instance)).collect::<Result<Vec<_>>>()?;
    Ok(prediction_from_scores(log_scores))
}

/// Argmax with lowest-index tie-break.
pub fn prediction_from_scores(log_scores: Vec<f64>) -> Prediction {
    let mut label = 0;
    for (i, &s) in log_scores.iter().enumerate() {
        if s > log_scores[label] {
            label = i;
        }
    }
    let runner_up = log_scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Prediction { label, margin: log_scores[label] - runner_up, log_scores }
}
