//! Forward interval algebra.
//!
//! Intervals are compared only in canonical order (earlier start first, ties
//! broken by earlier end), so just the seven "forward" Allen relations can
//! occur between an earlier interval and a later one. This module provides
//! relation determination from timestamps, the composition table, set-level
//! composition and the eleven composition classes used as link constraints.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One of the seven forward Allen relations, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseRelation {
    Before = 0,
    Meets = 1,
    Overlaps = 2,
    Starts = 3,
    Contains = 4,
    FinishedBy = 5,
    Equals = 6,
}

impl BaseRelation {
    pub const ALL: [BaseRelation; 7] = [
        BaseRelation::Before,
        BaseRelation::Meets,
        BaseRelation::Overlaps,
        BaseRelation::Starts,
        BaseRelation::Contains,
        BaseRelation::FinishedBy,
        BaseRelation::Equals,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseRelation::Before => "b",
            BaseRelation::Meets => "m",
            BaseRelation::Overlaps => "o",
            BaseRelation::Starts => "s",
            BaseRelation::Contains => "c",
            BaseRelation::FinishedBy => "f",
            BaseRelation::Equals => "eq",
        }
    }
}

impl fmt::Display for BaseRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

/// A subset of the seven forward relations, stored as seven flags (bit `i`
/// is the relation with canonical index `i`).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RelationSet(u8);

impl RelationSet {
    pub const EMPTY: RelationSet = RelationSet(0);
    /// All seven relations; the identity for intersection.
    pub const ALL: RelationSet = RelationSet(0x7f);

    pub const fn from_bits(bits: u8) -> Option<Self> {
        if bits & !0x7f == 0 {
            Some(RelationSet(bits))
        } else {
            None
        }
    }

    #[inline]
    pub const fn bits(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn singleton(r: BaseRelation) -> Self {
        RelationSet(1 << r as u8)
    }

    #[inline]
    pub fn contains(self, r: BaseRelation) -> bool {
        self.0 & (1 << r.index()) != 0
    }

    #[inline]
    pub fn insert(&mut self, r: BaseRelation) {
        self.0 |= 1 << r.index();
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn union(self, other: RelationSet) -> RelationSet {
        RelationSet(self.0 | other.0)
    }

    #[inline]
    pub fn is_subset(self, other: RelationSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// The single member, if this set has exactly one.
    pub fn as_singleton(self) -> Option<BaseRelation> {
        if self.len() == 1 {
            BaseRelation::from_index(self.0.trailing_zeros() as usize)
        } else {
            None
        }
    }

    /// Members in canonical order.
    pub fn iter(self) -> impl Iterator<Item = BaseRelation> {
        BaseRelation::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    /// Position of `r` among the members in canonical order.
    pub fn position(self, r: BaseRelation) -> Option<usize> {
        if !self.contains(r) {
            return None;
        }
        let below = self.0 & ((1u8 << r.index()) - 1);
        Some(below.count_ones() as usize)
    }
}

impl FromIterator<BaseRelation> for RelationSet {
    fn from_iter<I: IntoIterator<Item = BaseRelation>>(iter: I) -> Self {
        let mut set = RelationSet::EMPTY;
        for r in iter {
            set.insert(r);
        }
        set
    }
}

impl fmt::Display for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for r in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            f.write_str(r.name())?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self)
    }
}

impl FromStr for RelationSet {
    type Err = Error;

    /// Parses the comma-joined textual form, e.g. `"b,m,o"`. The empty string
    /// parses to the empty set.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(RelationSet::EMPTY);
        }
        s.split(',').map(|part| part.trim().parse::<BaseRelation>()).collect()
    }
}

impl Serialize for RelationSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RelationSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Relation between two intervals given as `(start, end)` pairs, the first
/// being canonically no later than the second.
pub fn relation_of(first: (f64, f64), second: (f64, f64)) -> Result<BaseRelation> {
    let (s1, e1) = first;
    let (s2, e2) = second;
    for (start, end) in [first, second] {
        if !(start < end) {
            return Err(Error::DegenerateInterval { start, end });
        }
    }
    let canonical = s1 < s2 || (s1 == s2 && e1 <= e2);
    if !canonical {
        return Err(Error::OrderViolation { first, second });
    }
    let rel = if e1 < s2 {
        BaseRelation::Before
    } else if e1 == s2 {
        BaseRelation::Meets
    } else if s1 == s2 {
        if e1 == e2 {
            BaseRelation::Equals
        } else {
            BaseRelation::Starts
        }
    } else if e2 < e1 {
        BaseRelation::Contains
    } else if e1 == e2 {
        BaseRelation::FinishedBy
    } else {
        BaseRelation::Overlaps
    };
    Ok(rel)
}

// Generated by `brute_force_compose` over all 49 pairs; rows are the first
// relation, columns the second, both in canonical order.
const B: u8 = 1 << 0;
const M: u8 = 1 << 1;
const O: u8 = 1 << 2;
const S: u8 = 1 << 3;
const C: u8 = 1 << 4;
const F: u8 = 1 << 5;
const EQ: u8 = 1 << 6;

const COMPOSITION: [[u8; 7]; 7] = [
    // b
    [B, B, B, B, B, B, B],
    // m
    [B, B, B, M, B, B, M],
    // o
    [B, B, B | M | O, O, B | M | O | C | F, B | M | O, O],
    // s
    [B, B, B | M | O, S, B | M | O | C | F, B | M | O, S],
    // c
    [B | M | O | C | F, O | C | F, O | C | F, O | C | F, C, C, C],
    // f
    [B, M, O, O, C, F, F],
    // eq
    [B, M, O, S, C, F, EQ],
];

/// Transitivity-table entry: every relation that `I1` can have to `I3` when
/// `I1 r1 I2` and `I2 r2 I3`.
#[inline]
pub fn compose(r1: BaseRelation, r2: BaseRelation) -> RelationSet {
    RelationSet(COMPOSITION[r1.index()][r2.index()])
}

/// Width of the integer endpoint window used by [`brute_force_compose`].
pub const BRUTE_FORCE_WINDOW: i32 = 8;

/// Composition by enumeration: every triple of intervals with integer
/// endpoints in `[0, 8)` whose first two links realize `r1` and `r2`
/// contributes the relation of its outer link.
pub fn brute_force_compose(r1: BaseRelation, r2: BaseRelation) -> RelationSet {
    let intervals: Vec<(f64, f64)> = (0..BRUTE_FORCE_WINDOW)
        .flat_map(|s| ((s + 1)..BRUTE_FORCE_WINDOW).map(move |e| (s as f64, e as f64)))
        .collect();
    let mut out = RelationSet::EMPTY;
    for &a in &intervals {
        for &b in &intervals {
            if relation_of(a, b).ok() != Some(r1) {
                continue;
            }
            for &c in &intervals {
                if relation_of(b, c).ok() == Some(r2) {
                    // a <= b <= c canonically, so (a, c) is canonical too
                    out.insert(relation_of(a, c).expect("canonical by transitivity"));
                }
            }
        }
    }
    out
}

/// Composition product of two relation sets: the union of all pairwise
/// compositions.
pub fn compose_sets(first: RelationSet, second: RelationSet) -> Result<RelationSet> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::EmptyRelationSet);
    }
    let mut out = RelationSet::EMPTY;
    for r1 in first.iter() {
        for r2 in second.iter() {
            out = out.union(compose(r1, r2));
        }
    }
    Ok(out)
}

/// Set intersection. The result may be empty; callers decide whether that is
/// an error.
#[inline]
pub fn intersect(first: RelationSet, second: RelationSet) -> RelationSet {
    RelationSet(first.0 & second.0)
}

/// A member of the closed family of link constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompositionClass {
    /// 1-based class index.
    pub index: usize,
    pub members: RelationSet,
}

pub const COMPOSITION_CLASS_COUNT: usize = 11;

/// Enumerates the constraint classes: every distinct result of composing two
/// base relations, together with the full set (the constraint on a link
/// between adjacent nodes).
///
/// Indices 1..=7 are the singletons in canonical relation order; the
/// remaining classes follow sorted by cardinality, then by flag encoding.
pub fn enumerate_composition_classes() -> Result<Vec<CompositionClass>> {
    let mut sets: Vec<RelationSet> = Vec::new();
    for r1 in BaseRelation::ALL {
        for r2 in BaseRelation::ALL {
            let set = compose(r1, r2);
            if !sets.contains(&set) {
                sets.push(set);
            }
        }
    }
    if !sets.contains(&RelationSet::ALL) {
        sets.push(RelationSet::ALL);
    }
    if sets.len() != COMPOSITION_CLASS_COUNT {
        return Err(Error::ClassCountMismatch(sets.len()));
    }
    sets.sort_by_key(|s| (s.len(), s.bits()));
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(i, members)| CompositionClass { index: i + 1, members })
        .collect())
}

/// Cached class table.
pub fn composition_classes() -> &'static [CompositionClass] {
    static CLASSES: OnceLock<Vec<CompositionClass>> = OnceLock::new();
    CLASSES.get_or_init(|| enumerate_composition_classes().expect("composition table is frozen"))
}

/// Class index (1..=11) of a constraint set, or `None` when the set is not
/// one of the classes.
pub fn classify_constraint(set: RelationSet) -> Result<Option<usize>> {
    if set.is_empty() {
        return Err(Error::EmptyRelationSet);
    }
    Ok(composition_classes()
        .iter()
        .find(|c| c.members == set)
        .map(|c| c.index))
}
