//! Interval networks and link constraints.
//!
//! Node indices are 0-based throughout. A link `(i, j)` always has `i < j`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::algebra::{compose_sets, intersect, relation_of, BaseRelation, RelationSet};
use crate::{Error, Result};

/// Atomic action identifier. `0` is the null action; real actions are
/// `1..=M`, with action `a` stored at vocabulary position `a - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl ActionId {
    pub const NULL: ActionId = ActionId(0);

    pub fn from_vocab_index(index: usize) -> Self {
        ActionId(index as u32 + 1)
    }

    /// Vocabulary position, `None` for the null action.
    pub fn vocab_index(self) -> Option<usize> {
        (self.0 as usize).checked_sub(1)
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

/// An atomic action occupying `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub action: ActionId,
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(action: ActionId, start: f64, end: f64) -> Self {
        Interval { action, start, end }
    }

    /// Padding interval: null action, both endpoints at `+inf`.
    pub fn null() -> Self {
        Interval { action: ActionId::NULL, start: f64::INFINITY, end: f64::INFINITY }
    }

    pub fn is_null(&self) -> bool {
        self.action.is_null()
    }

    pub fn times(&self) -> (f64, f64) {
        (self.start, self.end)
    }
}

/// A complex activity instance: intervals in canonical order and an
/// optional class label (index into the corpus class list).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Instance {
    pub label: Option<usize>,
    pub intervals: Vec<Interval>,
}

impl Instance {
    pub fn new(label: Option<usize>, intervals: Vec<Interval>) -> Self {
        Instance { label, intervals }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Stable sort by start, then end. Nulls sort last since their
    /// endpoints are `+inf`.
    pub fn sort_canonical(&mut self) {
        self.intervals
            .sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    }

    pub fn is_canonical(&self) -> bool {
        let mut seen_null = false;
        for pair in self.intervals.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            seen_null |= a.is_null();
            if seen_null {
                if !b.is_null() {
                    return false;
                }
                continue;
            }
            if b.is_null() {
                continue;
            }
            if !(a.start < b.start || (a.start == b.start && a.end <= b.end)) {
                return false;
            }
        }
        true
    }

    /// Actions of the non-null intervals, in order.
    pub fn actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.intervals.iter().filter(|iv| !iv.is_null()).map(|iv| iv.action)
    }
}

#[inline]
fn tri_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// Nodes with actions and an upper-triangular relation matrix. `None` marks
/// the null relation (a padded endpoint, or a link that was not generated).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalNetwork {
    pub actions: Vec<ActionId>,
    relations: Vec<Option<BaseRelation>>,
}

impl IntervalNetwork {
    pub fn new(actions: Vec<ActionId>) -> Self {
        let k = actions.len();
        IntervalNetwork { actions, relations: vec![None; k * k.saturating_sub(1) / 2] }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn relation(&self, i: usize, j: usize) -> Option<BaseRelation> {
        self.relations[tri_index(self.len(), i, j)]
    }

    pub fn set_relation(&mut self, i: usize, j: usize, relation: Option<BaseRelation>) {
        let idx = tri_index(self.len(), i, j);
        self.relations[idx] = relation;
    }
}

/// Builds the full pairwise relation matrix of an instance.
pub fn instance_to_network(instance: &Instance) -> Result<IntervalNetwork> {
    let ivs = &instance.intervals;
    let mut network = IntervalNetwork::new(ivs.iter().map(|iv| iv.action).collect());
    for j in 1..ivs.len() {
        for i in 0..j {
            if ivs[i].is_null() || ivs[j].is_null() {
                continue;
            }
            network.set_relation(i, j, Some(relation_of(ivs[i].times(), ivs[j].times())?));
        }
    }
    Ok(network)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    /// Triangles `(i, j, k)` with `r_ik` outside `r_ij o r_jk`.
    pub violations: Vec<(usize, usize, usize)>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every triangle whose three links all carry a relation.
pub fn check_consistency(network: &IntervalNetwork) -> ConsistencyReport {
    let k = network.len();
    let mut report = ConsistencyReport::default();
    for i in 0..k {
        for j in (i + 1)..k {
            let Some(rij) = network.relation(i, j) else { continue };
            for l in (j + 1)..k {
                let (Some(rjl), Some(ril)) = (network.relation(j, l), network.relation(i, l)) else {
                    continue;
                };
                if !crate::algebra::compose(rij, rjl).contains(ril) {
                    report.violations.push((i, j, l));
                }
            }
        }
    }
    report
}

/// Set of modeled links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureMask {
    k: usize,
    links: BTreeSet<(usize, usize)>,
}

impl StructureMask {
    pub fn empty(k: usize) -> Self {
        StructureMask { k, links: BTreeSet::new() }
    }

    pub fn chain(k: usize) -> Self {
        StructureMask { k, links: (1..k).map(|j| (j - 1, j)).collect() }
    }

    pub fn full(k: usize) -> Self {
        StructureMask { k, links: (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect() }
    }

    /// Panics if a link is out of range or not forward.
    pub fn from_links(k: usize, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let links: BTreeSet<_> = links.into_iter().collect();
        assert!(links.iter().all(|&(i, j)| i < j && j < k), "link out of range for k = {k}");
        StructureMask { k, links }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        assert!(i < j && j < self.k);
        self.links.insert((i, j));
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }
}

/// Upper-triangular matrix of relation sets, the working `x` matrix of the
/// constraint recursion. Unresolved entries are empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrix {
    k: usize,
    cells: Vec<RelationSet>,
}

impl RelationMatrix {
    pub fn new(k: usize) -> Self {
        RelationMatrix { k, cells: vec![RelationSet::EMPTY; k * k.saturating_sub(1) / 2] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> RelationSet {
        self.cells[tri_index(self.k, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: RelationSet) {
        let idx = tri_index(self.k, i, j);
        self.cells[idx] = value;
    }
}

/// Interval relation constraint on link `(from, to)`.
///
/// Adjacent nodes get the full set; otherwise the constraint is the
/// intersection over intermediate nodes `m` of `x[from][m] o x[m][to]`.
/// Every such `x` entry must already be resolved.
pub fn compute_constraint(x: &RelationMatrix, from: usize, to: usize) -> Result<RelationSet> {
    debug_assert!(from < to);
    if to == from + 1 {
        return Ok(RelationSet::ALL);
    }
    let mut constraint = RelationSet::ALL;
    for mid in (from + 1)..to {
        let left = x.get(from, mid);
        let right = x.get(mid, to);
        let composed =
            compose_sets(left, right).map_err(|_| Error::EmptyConstraint { from, to })?;
        constraint = intersect(constraint, composed);
    }
    if constraint.is_empty() {
        return Err(Error::EmptyConstraint { from, to });
    }
    Ok(constraint)
}

/// Runs the constraint recursion over the first `k` nodes.
///
/// Links are visited with `to` ascending and, for each `to`, `from`
/// descending, so every entry the recursion reads is already resolved. For a
/// link in `mask`, `on_link(from, to, constraint)` picks the relation and the
/// singleton is stored; other pairs store their constraint.
pub fn resolve_links<F>(k: usize, mask: &StructureMask, mut on_link: F) -> Result<RelationMatrix>
where
    F: FnMut(usize, usize, RelationSet) -> Result<BaseRelation>,
{
    let mut x = RelationMatrix::new(k);
    for to in 1..k {
        for from in (0..to).rev() {
            let constraint = compute_constraint(&x, from, to)?;
            let value = if mask.contains(from, to) {
                RelationSet::singleton(on_link(from, to, constraint)?)
            } else {
                constraint
            };
            x.set(from, to, value);
        }
    }
    Ok(x)
}

/// Appends null intervals up to length `k_star`.
pub fn pad_nulls(instance: &Instance, k_star: usize) -> Result<Instance> {
    let len = instance.len();
    if len > k_star {
        return Err(Error::InstanceTooLong { len, k_star });
    }
    let mut padded = instance.clone();
    padded.intervals.resize(k_star, Interval::null());
    Ok(padded)
}
