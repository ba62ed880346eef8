//! The per-class generative process.
//!
//! Each node picks a table through a Chinese restaurant process with
//! per-table concentration `alpha`, then draws its action from that table's
//! multinomial `theta`. Links in the structure mask then draw a relation
//! from `phi`, restricted to the link's interval relation constraint, which
//! keeps every generated network temporally consistent.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{compose, relation_of, BaseRelation, RelationSet};
use crate::network::{
    compute_constraint, ActionId, Instance, Interval, IntervalNetwork, RelationMatrix,
    StructureMask,
};
use crate::{Error, Result};

/// Key of a relation distribution: the two endpoint actions and the
/// constraint on the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhiKey {
    pub from_action: ActionId,
    pub to_action: ActionId,
    pub constraint: RelationSet,
}

/// Learned parameters for one activity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    /// Longest training instance.
    pub k_star: usize,
    /// Table budget.
    pub ell: usize,
    pub alpha: Vec<f64>,
    /// `ell x M` Dirichlet priors.
    pub beta: Vec<Vec<f64>>,
    /// `ell x M` per-table action distributions.
    pub theta: Vec<Vec<f64>>,
    pub structure: StructureMask,
    /// Relation distributions over the members of each key's constraint, in
    /// canonical relation order.
    #[serde(with = "phi_entries")]
    pub phi: BTreeMap<PhiKey, Vec<f64>>,
    pub action_vocab: Vec<String>,
    /// Training instance length -> count.
    pub size_histogram: BTreeMap<usize, u64>,
}

impl ClassModel {
    pub fn num_actions(&self) -> usize {
        self.action_vocab.len()
    }

    /// Probability of `relation` on a link with the given key. Unseen keys
    /// fall back to uniform over the constraint.
    pub fn relation_probability(&self, key: &PhiKey, relation: BaseRelation) -> f64 {
        let Some(pos) = key.constraint.position(relation) else {
            return 0.0;
        };
        match self.phi.get(key) {
            Some(probs) => probs[pos],
            None => 1.0 / key.constraint.len() as f64,
        }
    }

    /// Checks the distribution invariants; returns a description of the
    /// first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let m = self.num_actions();
        if self.alpha.len() != self.ell || self.beta.len() != self.ell || self.theta.len() != self.ell {
            return Err("table dimension mismatch".into());
        }
        if self.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err("alpha must be positive".into());
        }
        for (zeta, (beta, theta)) in self.beta.iter().zip(&self.theta).enumerate() {
            if beta.len() != m || theta.len() != m {
                return Err(format!("table {zeta}: expected {m} actions"));
            }
            if beta.iter().any(|&b| !(b > 0.0)) {
                return Err(format!("table {zeta}: beta must be positive"));
            }
            let total: f64 = theta.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(format!("table {zeta}: theta sums to {total}"));
            }
        }
        for (key, probs) in &self.phi {
            if probs.len() != key.constraint.len() {
                return Err(format!("phi {key:?}: support mismatch"));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(format!("phi {key:?}: sums to {total}"));
            }
        }
        Ok(())
    }
}

mod phi_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        i: ActionId,
        j: ActionId,
        constraint: RelationSet,
        probs: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(
        phi: &BTreeMap<PhiKey, Vec<f64>>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(phi.iter().map(|(k, probs)| Entry {
            i: k.from_action,
            j: k.to_action,
            constraint: k.constraint,
            probs: probs.clone(),
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<BTreeMap<PhiKey, Vec<f64>>, D::Error> {
        let entries = Vec::<Entry>::deserialize(deserializer)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                let key = PhiKey { from_action: e.i, to_action: e.j, constraint: e.constraint };
                (key, e.probs)
            })
            .collect())
    }
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite());
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

/// Table choice distribution for the `n`-th node (1-based) given the
/// occupancy `nt` of the previous `n - 1` nodes.
///
/// Returns one probability per table in the budget. Occupied tables get
/// weight `nt / (n + alpha - 1)`; the lowest unoccupied table is the new
/// table with weight `alpha / (n + alpha - 1)`; all others get zero. When no
/// table is free the occupied weights are renormalized on their own.
pub fn crp_table_distribution(nt: &[u32], n: usize, alpha: &[f64]) -> Vec<f64> {
    assert_eq!(nt.len(), alpha.len());
    let n = n as f64;
    let mut weights = vec![0.0; nt.len()];
    let mut new_table = None;
    for (zeta, (&count, &a)) in nt.iter().zip(alpha).enumerate() {
        if count > 0 {
            weights[zeta] = count as f64 / (n + a - 1.0);
        } else if new_table.is_none() {
            new_table = Some(zeta);
            weights[zeta] = a / (n + a - 1.0);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// Nodes generated so far for one network.
#[derive(Debug, Clone, Default)]
pub struct GenerationState {
    pub tables: Vec<usize>,
    pub actions: Vec<ActionId>,
    pub nt: Vec<u32>,
}

impl GenerationState {
    pub fn new(ell: usize) -> Self {
        GenerationState { tables: Vec::new(), actions: Vec::new(), nt: vec![0; ell] }
    }
}

/// Seats the next node and serves its action.
pub fn sample_node<R: Rng + ?Sized>(
    state: &mut GenerationState,
    model: &ClassModel,
    rng: &mut R,
) -> (usize, ActionId) {
    let n = state.tables.len() + 1;
    let table = sample_categorical(rng, &crp_table_distribution(&state.nt, n, &model.alpha));
    let action = ActionId::from_vocab_index(sample_categorical(rng, &model.theta[table]));
    state.nt[table] += 1;
    state.tables.push(table);
    state.actions.push(action);
    (table, action)
}

/// A generated network: relations on structure links, the resolved
/// constraint matrix, and the table of every node.
#[derive(Debug, Clone)]
pub struct SampledNetwork {
    pub network: IntervalNetwork,
    pub constraints: RelationMatrix,
    pub tables: Vec<usize>,
}

/// Attempts per network before giving up on an empty constraint or an
/// unrealizable relation matrix.
pub const MAX_ATTEMPTS: usize = 10_000;

/// Generates a `k`-node network.
///
/// Chain and full structures never meet an empty constraint. Sparser masks
/// can, because a link's constraint only looks at nodes between its
/// endpoints; such draws are discarded and the network is sampled again.
pub fn sample_network<R: Rng + ?Sized>(
    model: &ClassModel,
    k: usize,
    rng: &mut R,
) -> Result<SampledNetwork> {
    if k == 0 || k > model.k_star {
        return Err(Error::ConfigInvalid(format!(
            "network size {k} outside 1..={}",
            model.k_star
        )));
    }
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        match sample_network_once(model, k, rng) {
            Err(e @ Error::EmptyConstraint { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

fn sample_network_once<R: Rng + ?Sized>(
    model: &ClassModel,
    k: usize,
    rng: &mut R,
) -> Result<SampledNetwork> {
    let mut state = GenerationState::new(model.ell);
    let mut x = RelationMatrix::new(k);
    let mut network = IntervalNetwork::new(vec![ActionId::NULL; k]);
    for to in 0..k {
        let (_, action) = sample_node(&mut state, model, rng);
        network.actions[to] = action;
        for from in (0..to).rev() {
            let constraint = compute_constraint(&x, from, to)?;
            if model.structure.contains(from, to) {
                let key = PhiKey {
                    from_action: network.actions[from],
                    to_action: action,
                    constraint,
                };
                let weights: Vec<f64> =
                    constraint.iter().map(|r| model.relation_probability(&key, r)).collect();
                let members: Vec<BaseRelation> = constraint.iter().collect();
                let relation = members[sample_categorical(rng, &weights)];
                network.set_relation(from, to, Some(relation));
                x.set(from, to, RelationSet::singleton(relation));
            } else {
                x.set(from, to, constraint);
            }
        }
    }
    Ok(SampledNetwork { network, constraints: x, tables: state.tables })
}

/// Draws a network size from the training length histogram.
pub fn sample_size<R: Rng + ?Sized>(model: &ClassModel, rng: &mut R) -> usize {
    let sizes: Vec<usize> = model.size_histogram.keys().copied().collect();
    if sizes.is_empty() {
        return model.k_star;
    }
    let weights: Vec<f64> = model.size_histogram.values().map(|&c| c as f64).collect();
    sizes[sample_categorical(rng, &weights)]
}

const REALIZATION_STEP_LIMIT: usize = 1_000_000;

/// Assigns integer timestamps (on a grid of at most `2k` values) realizing
/// every singleton entry of `x`. Non-singleton entries are refined to one of
/// their members, chosen at random subject to triangle consistency.
pub fn realize_timestamps<R: Rng + ?Sized>(
    x: &RelationMatrix,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let k = x.k();
    let mut pairs = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for to in 1..k {
        for from in (0..to).rev() {
            pairs.push((from, to));
        }
    }
    let mut atomic: Vec<Vec<Option<BaseRelation>>> = vec![vec![None; k]; k];
    let mut steps = 0usize;
    if !refine(x, &pairs, 0, &mut atomic, rng, &mut steps) {
        return Err(Error::Realization);
    }
    let times = endpoints_from_atomic(k, &atomic).ok_or(Error::Realization)?;
    for j in 1..k {
        for i in 0..j {
            if relation_of(times[i], times[j])? != atomic[i][j].expect("all pairs assigned") {
                return Err(Error::Realization);
            }
        }
    }
    Ok(times)
}

fn triangle_ok(atomic: &[Vec<Option<BaseRelation>>], a: usize, b: usize, c: usize) -> bool {
    match (atomic[a][b], atomic[b][c], atomic[a][c]) {
        (Some(ab), Some(bc), Some(ac)) => compose(ab, bc).contains(ac),
        _ => true,
    }
}

fn refine<R: Rng + ?Sized>(
    x: &RelationMatrix,
    pairs: &[(usize, usize)],
    pos: usize,
    atomic: &mut Vec<Vec<Option<BaseRelation>>>,
    rng: &mut R,
    steps: &mut usize,
) -> bool {
    let Some(&(i, j)) = pairs.get(pos) else {
        return true;
    };
    let mut candidates: Vec<BaseRelation> = x.get(i, j).iter().collect();
    // Fisher-Yates
    for idx in (1..candidates.len()).rev() {
        let swap = rng.random_range(0..=idx);
        candidates.swap(idx, swap);
    }
    let k = x.k();
    for r in candidates {
        *steps += 1;
        if *steps > REALIZATION_STEP_LIMIT {
            return false;
        }
        atomic[i][j] = Some(r);
        let ok = (0..k).filter(|&m| m != i && m != j).all(|m| {
            let mut t = [i, j, m];
            t.sort_unstable();
            triangle_ok(atomic, t[0], t[1], t[2])
        });
        if ok && refine(x, pairs, pos + 1, atomic, rng, steps) {
            return true;
        }
        atomic[i][j] = None;
    }
    false
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PointRel {
    Less,
    Equal,
}

// Endpoint order implied by `I_i r I_j`: (s_i, s_j), (s_i, e_j), (e_i, s_j), (e_i, e_j).
// `None` is "greater than".
fn endpoint_relations(r: BaseRelation) -> [Option<PointRel>; 4] {
    use PointRel::*;
    match r {
        BaseRelation::Before => [Some(Less), Some(Less), Some(Less), Some(Less)],
        BaseRelation::Meets => [Some(Less), Some(Less), Some(Equal), Some(Less)],
        BaseRelation::Overlaps => [Some(Less), Some(Less), None, Some(Less)],
        BaseRelation::Starts => [Some(Equal), Some(Less), None, Some(Less)],
        BaseRelation::Contains => [Some(Less), Some(Less), None, None],
        BaseRelation::FinishedBy => [Some(Less), Some(Less), None, Some(Equal)],
        BaseRelation::Equals => [Some(Equal), Some(Less), None, Some(Equal)],
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Ranks the `2k` endpoints of an atomic network; `None` if the implied
/// point order is cyclic.
fn endpoints_from_atomic(k: usize, atomic: &[Vec<Option<BaseRelation>>]) -> Option<Vec<(f64, f64)>> {
    let points = 2 * k;
    let mut parent: Vec<usize> = (0..points).collect();
    let mut less: Vec<(usize, usize)> = (0..k).map(|i| (2 * i, 2 * i + 1)).collect();
    for j in 1..k {
        for i in 0..j {
            let rels = endpoint_relations(atomic[i][j]?);
            let pairs = [(2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1)];
            for ((p, q), rel) in pairs.into_iter().zip(rels) {
                match rel {
                    Some(PointRel::Less) => less.push((p, q)),
                    Some(PointRel::Equal) => {
                        let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                        parent[rp] = rq;
                    }
                    None => less.push((q, p)),
                }
            }
        }
    }
    let roots: Vec<usize> = (0..points).map(|p| find(&mut parent, p)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); points];
    let mut indegree = vec![0usize; points];
    for (p, q) in less {
        let (rp, rq) = (roots[p], roots[q]);
        if rp == rq {
            return None;
        }
        succ[rp].push(rq);
        indegree[rq] += 1;
    }
    // longest-path layering over the class DAG
    let mut rank = vec![0usize; points];
    let mut queue: Vec<usize> =
        (0..points).filter(|&p| roots[p] == p && indegree[p] == 0).collect();
    let mut visited = 0;
    let classes = (0..points).filter(|&p| roots[p] == p).count();
    while let Some(p) = queue.pop() {
        visited += 1;
        for &q in &succ[p] {
            rank[q] = rank[q].max(rank[p] + 1);
            indegree[q] -= 1;
            if indegree[q] == 0 {
                queue.push(q);
            }
        }
    }
    if visited != classes {
        return None;
    }
    Some(
        (0..k)
            .map(|i| (rank[roots[2 * i]] as f64, rank[roots[2 * i + 1]] as f64))
            .collect(),
    )
}

/// Samples a network of size `k` and realizes it as an (unlabeled) instance.
/// Networks that admit no timestamps are discarded and drawn again.
pub fn generate_instance<R: Rng + ?Sized>(
    model: &ClassModel,
    k: usize,
    rng: &mut R,
) -> Result<Instance> {
    for _ in 0..MAX_ATTEMPTS {
        let sampled = sample_network(model, k, rng)?;
        let times = match realize_timestamps(&sampled.constraints, rng) {
            Ok(times) => times,
            Err(Error::Realization) => continue,
            Err(e) => return Err(e),
        };
        let intervals = sampled
            .network
            .actions
            .iter()
            .zip(times)
            .map(|(&a, (s, e))| Interval::new(a, s, e))
            .collect();
        return Ok(Instance::new(None, intervals));
    }
    Err(Error::Realization)
}
