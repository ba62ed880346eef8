//! Point estimates of the table and relation distributions.

use std::collections::BTreeMap;

use crate::algebra::BaseRelation;
use crate::generative::PhiKey;

/// `theta[t][i] = (na[t][i] + beta[t][i]) / sum_i' (na[t][i'] + beta[t][i'])`.
pub fn estimate_theta(averaged_na: &[Vec<f64>], beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    averaged_na
        .iter()
        .zip(beta)
        .map(|(na, beta)| {
            let row: Vec<f64> = na.iter().zip(beta).map(|(n, b)| n + b).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Relation counts per key, one slot per base relation in canonical order.
pub type RelationCounts = BTreeMap<PhiKey, [u64; 7]>;

/// Smoothed relation distributions over each key's constraint members:
/// `(nr + rho) / (sum nr + rho * |C|)`. Singleton constraints get `[1.0]`.
pub fn estimate_phi(counts: &RelationCounts, rho: f64) -> BTreeMap<PhiKey, Vec<f64>> {
    counts
        .iter()
        .map(|(key, nr)| {
            let members: Vec<BaseRelation> = key.constraint.iter().collect();
            let probs = if members.len() == 1 {
                vec![1.0]
            } else {
                let total: f64 = members.iter().map(|r| nr[r.index()] as f64).sum::<f64>()
                    + rho * members.len() as f64;
                members.iter().map(|r| (nr[r.index()] as f64 + rho) / total).collect()
            };
            (*key, probs)
        })
        .collect()
}
