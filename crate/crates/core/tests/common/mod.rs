//! Oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use ibgn_core::{relation_of, ActionId, Instance, Interval};
use rand::Rng;

/// Canonically ordered instance of `k` intervals with small integer
/// endpoints, so that ties between endpoints are common.
pub fn random_instance(rng: &mut impl Rng, k: usize, m: u32) -> Instance {
    let mut intervals: Vec<Interval> = (0..k)
        .map(|_| {
            let s = rng.random_range(0..12) as f64;
            let e = s + rng.random_range(1..6) as f64;
            Interval::new(ActionId(rng.random_range(1..=m)), s, e)
        })
        .collect();
    intervals.sort_by(|a, b| a.times().partial_cmp(&b.times()).unwrap());
    let mut inst = Instance::new(Some(0), intervals);
    inst.sort_canonical();
    inst
}

/// Like [`random_instance`], but with probability `determined` the intervals
/// are laid end to end with lengths equal to their action ids, so relations
/// follow from the actions.
pub fn action_driven_instance(rng: &mut impl Rng, k: usize, m: u32, determined: f64) -> Instance {
    let mut inst = random_instance(rng, k, m);
    if rng.random_bool(determined) {
        let mut t = 0.0;
        for iv in inst.intervals.iter_mut() {
            let len = iv.action.0 as f64;
            *iv = Interval::new(iv.action, t, t + len);
            t += len;
        }
    }
    inst
}

// Relation value of every candidate link after null padding: 0..7 for the
// forward relations, 7 for null.
pub fn padded_values(inst: &Instance, k_star: usize) -> (Vec<u32>, HashMap<(usize, usize), usize>) {
    let mut actions = vec![0u32; k_star];
    let mut values = HashMap::new();
    for (i, iv) in inst.intervals.iter().enumerate() {
        actions[i] = iv.action.0;
    }
    for q in 1..k_star {
        for p in 0..q {
            let v = if q < inst.len() {
                relation_of(inst.intervals[p].times(), inst.intervals[q].times()).unwrap().index()
            } else {
                7
            };
            values.insert((p, q), v);
        }
    }
    (actions, values)
}

// Full BIC of the relation variables under a given link set, from raw counts.
pub fn exhaustive_bic(corpus: &[Instance], k_star: usize, m: usize, links: &BTreeSet<(usize, usize)>) -> f64 {
    let data: Vec<_> = corpus.iter().map(|inst| padded_values(inst, k_star)).collect();
    let n = corpus.len() as f64;
    let mut score = 0.0;
    for q in 1..k_star {
        for p in 0..q {
            let with_parents = links.contains(&(p, q));
            let mut joint: HashMap<(u32, u32, usize), f64> = HashMap::new();
            let mut parent: HashMap<(u32, u32), f64> = HashMap::new();
            for (actions, values) in &data {
                let config = if with_parents { (actions[p], actions[q]) } else { (0, 0) };
                *joint.entry((config.0, config.1, values[&(p, q)])).or_default() += 1.0;
                *parent.entry(config).or_default() += 1.0;
            }
            for ((a, b, _), count) in &joint {
                score += count * (count / parent[&(*a, *b)]).ln();
            }
            let configs = if with_parents { ((m + 1) * (m + 1)) as f64 } else { 1.0 };
            score -= n.ln() / 2.0 * 7.0 * configs;
        }
    }
    score
}

/// Link set maximizing [`exhaustive_bic`] over every subset of candidate
/// links.
pub fn exhaustive_structure(corpus: &[Instance], k_star: usize, m: usize) -> BTreeSet<(usize, usize)> {
    let candidates: Vec<(usize, usize)> = (0..k_star).flat_map(|p| ((p + 1)..k_star).map(move |q| (p, q))).collect();
    let mut best: Option<(f64, BTreeSet<(usize, usize)>)> = None;
    for bits in 0u32..(1 << candidates.len()) {
        let links: BTreeSet<_> =
            candidates.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &l)| l).collect();
        let s = exhaustive_bic(corpus, k_star, m, &links);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, links));
        }
    }
    best.unwrap().1
}
