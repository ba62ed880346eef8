//! BIC structure selection.
//!
//! Each link `(p, q)` of the padded network is a relation variable with 8
//! values (7 relations plus null). It either has no parents or exactly the
//! two endpoint actions, each with `M + 1` values (null included). The score
//! decomposes over these families, so every link is decided on its own.

use crate::network::{instance_to_network, pad_nulls, Instance, IntervalNetwork, StructureMask};
use crate::{Error, Result};

/// Number of values of a relation variable.
pub const RELATION_VALUES: usize = 8;

/// Sufficient statistics of one relation variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BicFamilyCounts {
    /// Number of values of each parent action, `M + 1`.
    pub parent_values: usize,
    /// `joint[j * 8 + k]`: instances with parent assignment `j` and relation
    /// value `k`, where `j = a_p * (M + 1) + a_q`.
    pub joint: Vec<u64>,
    pub marginal: [u64; RELATION_VALUES],
    pub dataset_size: u64,
}

impl BicFamilyCounts {
    pub fn new(num_actions: usize) -> Self {
        let parent_values = num_actions + 1;
        BicFamilyCounts {
            parent_values,
            joint: vec![0; parent_values * parent_values * RELATION_VALUES],
            marginal: [0; RELATION_VALUES],
            dataset_size: 0,
        }
    }

    /// Adds the observation of link `(p, q)` in a padded network.
    pub fn observe(&mut self, network: &IntervalNetwork, p: usize, q: usize) {
        let value = network.relation(p, q).map_or(RELATION_VALUES - 1, |r| r.index());
        let parent = network.actions[p].0 as usize * self.parent_values + network.actions[q].0 as usize;
        self.joint[parent * RELATION_VALUES + value] += 1;
        self.marginal[value] += 1;
        self.dataset_size += 1;
    }
}

fn xlogx_ratio(n: u64, total: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * (n as f64 / total as f64).ln()
    }
}

/// BIC score of one family with or without the two action parents.
pub fn bic_family_score(counts: &BicFamilyCounts, with_parents: bool) -> f64 {
    if counts.dataset_size == 0 {
        return 0.0;
    }
    let half_log_n = (counts.dataset_size as f64).ln() / 2.0;
    let free = (RELATION_VALUES - 1) as f64;
    if with_parents {
        let likelihood: f64 = counts
            .joint
            .chunks(RELATION_VALUES)
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&n| xlogx_ratio(n, total)).sum::<f64>()
            })
            .sum();
        let configs = (counts.parent_values * counts.parent_values) as f64;
        likelihood - half_log_n * free * configs
    } else {
        let likelihood: f64 = counts.marginal.iter().map(|&n| xlogx_ratio(n, counts.dataset_size)).sum();
        likelihood - half_log_n * free
    }
}

/// Family statistics for every candidate link of a corpus padded to the
/// longest instance, keyed by `(p, q)` in lexicographic order.
pub fn family_counts(corpus: &[Instance], num_actions: usize) -> Result<Vec<((usize, usize), BicFamilyCounts)>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let k_star = corpus.iter().map(Instance::len).max().unwrap_or(0);
    let networks = corpus
        .iter()
        .map(|inst| instance_to_network(&pad_nulls(inst, k_star)?))
        .collect::<Result<Vec<_>>>()?;
    let mut families = Vec::new();
    for p in 0..k_star {
        for q in (p + 1)..k_star {
            let mut counts = BicFamilyCounts::new(num_actions);
            for network in &networks {
                counts.observe(network, p, q);
            }
            families.push(((p, q), counts));
        }
    }
    Ok(families)
}

/// Links whose family scores higher with the two action parents than
/// without.
pub fn learn_structure(corpus: &[Instance], num_actions: usize) -> Result<StructureMask> {
    let k_star = corpus.iter().map(Instance::len).max().unwrap_or(0);
    let families = family_counts(corpus, num_actions)?;
    let links = families
        .iter()
        .filter(|(_, counts)| bic_family_score(counts, true) > bic_family_score(counts, false))
        .map(|(link, _)| *link);
    Ok(StructureMask::from_links(k_star, links))
}
