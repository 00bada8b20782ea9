//! Simulation of most-preferred-free-server rules.
//!
//! A rule sees only the request position and the set of free servers and
//! names the server to use. Whether that choice is consistent with a fixed
//! priority order per position is checked by [`derive_priority_order`], not
//! assumed.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{OfalError, Result};
use crate::model::{validate_pair, AssignmentTrace, Instance, Rational, RequestSequence, ServerLayout};

/// Set of server indices below 64, as a bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreeSet(u64);

impl FreeSet {
    pub const EMPTY: FreeSet = FreeSet(0);

    pub fn all(k: usize) -> Self {
        if k >= 64 {
            FreeSet(u64::MAX)
        } else {
            FreeSet((1u64 << k) - 1)
        }
    }

    /// Servers `lo..=hi`.
    pub fn range(lo: usize, hi: usize) -> Self {
        FreeSet(Self::all(hi + 1).0 & !Self::all(lo).0)
    }

    pub fn from_bits(bits: u64) -> Self {
        FreeSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn single(j: usize) -> Self {
        FreeSet(1u64 << j)
    }

    pub fn contains(self, j: usize) -> bool {
        j < 64 && self.0 >> j & 1 == 1
    }

    pub fn insert(&mut self, j: usize) {
        self.0 |= 1u64 << j;
    }

    pub fn remove(&mut self, j: usize) {
        self.0 &= !(1u64 << j);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn last(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    pub fn intersect(self, other: FreeSet) -> FreeSet {
        FreeSet(self.0 & other.0)
    }

    pub fn minus(self, other: FreeSet) -> FreeSet {
        FreeSet(self.0 & !other.0)
    }

    pub fn union(self, other: FreeSet) -> FreeSet {
        FreeSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(j)
            }
        })
    }

    pub fn from_remaining(remaining: &[u32]) -> Self {
        remaining
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .fold(FreeSet::EMPTY, |mut f, (j, _)| {
                f.insert(j);
                f
            })
    }
}

impl FromIterator<usize> for FreeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut f = FreeSet::EMPTY;
        for j in iter {
            f.insert(j);
        }
        f
    }
}

impl fmt::Debug for FreeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A decision procedure over a fixed layout.
///
/// `decide` must return a member of `free` whenever `free` is non-empty and
/// may depend on nothing but the request position and the free set.
pub trait PriorityRule: Send + Sync {
    fn id(&self) -> &str;

    fn server_count(&self) -> usize;

    fn decide(&self, r: &Rational, free: FreeSet) -> usize;
}

impl<R: PriorityRule + ?Sized> PriorityRule for &R {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn server_count(&self) -> usize {
        (**self).server_count()
    }

    fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        (**self).decide(r, free)
    }
}

impl<R: PriorityRule + ?Sized> PriorityRule for Box<R> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn server_count(&self) -> usize {
        (**self).server_count()
    }

    fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        (**self).decide(r, free)
    }
}

/// Residual capacities for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineState {
    capacities: Vec<u32>,
    remaining: Vec<u32>,
    free: FreeSet,
}

impl EngineState {
    pub fn new(inst: &Instance) -> Self {
        let capacities = inst.capacities().to_vec();
        Self {
            free: FreeSet::all(capacities.len()),
            remaining: capacities.clone(),
            capacities,
        }
    }

    pub fn free(&self) -> FreeSet {
        self.free
    }

    pub fn remaining(&self) -> &[u32] {
        &self.remaining
    }

    pub fn take(&mut self, j: usize) {
        debug_assert!(self.remaining[j] > 0);
        self.remaining[j] -= 1;
        if self.remaining[j] == 0 {
            self.free.remove(j);
        }
    }

    /// Undoes one [`take`](Self::take) on `j`.
    pub fn give_back(&mut self, j: usize) {
        debug_assert!(self.remaining[j] < self.capacities[j]);
        self.remaining[j] += 1;
        self.free.insert(j);
    }

    /// Matches `r` with the rule's choice and returns it.
    pub fn step<R: PriorityRule + ?Sized>(&mut self, rule: &R, r: &Rational) -> Result<usize> {
        let j = rule.decide(r, self.free);
        if !self.free.contains(j) {
            return Err(OfalError::RuleChoseFullServer {
                rule: rule.id().to_string(),
                server: j,
            });
        }
        self.take(j);
        Ok(j)
    }
}

fn check_rule<R: PriorityRule + ?Sized>(rule: &R, inst: &Instance) -> Result<()> {
    if rule.server_count() != inst.len() {
        return Err(OfalError::RuleMismatch {
            rule: rule.id().to_string(),
            rule_servers: rule.server_count(),
            servers: inst.len(),
        });
    }
    Ok(())
}

/// Runs `rule` over `seq`, matching each request to the rule's choice among the
/// servers still free.
pub fn simulate<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    seq: &RequestSequence,
) -> Result<AssignmentTrace> {
    validate_pair(inst, seq)?;
    check_rule(rule, inst)?;
    let mut state = EngineState::new(inst);
    let mut assignment = Vec::with_capacity(seq.len());
    for r in seq.iter() {
        assignment.push(state.step(rule, r)?);
    }
    AssignmentTrace::from_assignment(rule.id(), inst, seq, assignment)
}

/// Closest free server on each side of a request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Surrounding {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl Surrounding {
    pub fn contains(&self, j: usize) -> bool {
        self.left == Some(j) || self.right == Some(j)
    }

    /// The request sits on a free server, which is then its only surrounding server.
    pub fn is_single(&self) -> bool {
        self.left.is_some() && self.left == self.right
    }

    pub fn count(&self) -> usize {
        match (self.left, self.right) {
            (Some(a), Some(b)) if a == b => 1,
            (l, r) => l.is_some() as usize + r.is_some() as usize,
        }
    }
}

/// Surrounding servers of `r` among `free`. A free server located exactly at
/// `r` is reported on both sides.
pub fn surrounding_servers(r: &Rational, free: FreeSet, layout: &ServerLayout) -> Surrounding {
    let mut left = None;
    let mut right = None;
    for j in free.iter() {
        let p = layout.position(j);
        if p == r {
            return Surrounding {
                left: Some(j),
                right: Some(j),
            };
        }
        if p < r {
            left = Some(j);
        } else if right.is_none() {
            right = Some(j);
        }
    }
    Surrounding { left, right }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MpfsInconsistency {
    pub rule: String,
    pub position: Rational,
    pub free: FreeSet,
    pub decided: usize,
    pub expected: usize,
}

impl fmt::Display for MpfsInconsistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule {} at r={} with free {:?} chose {} but its derived order prefers {}",
            self.rule, self.position, self.free, self.decided, self.expected
        )
    }
}

/// Extracts the priority order a rule induces at position `r`.
///
/// The order is built by repeatedly asking the rule to choose among the servers
/// not yet ranked. It is then checked against `trials` random free sets drawn
/// from `seed`; any set where the rule disagrees with the order's maximum shows
/// the rule is not an MPFS rule at `r`.
pub fn derive_priority_order<R: PriorityRule + ?Sized>(
    rule: &R,
    r: &Rational,
    trials: usize,
    seed: u64,
) -> std::result::Result<Vec<usize>, MpfsInconsistency> {
    let k = rule.server_count();
    let mut unranked = FreeSet::all(k);
    let mut order = Vec::with_capacity(k);
    while !unranked.is_empty() {
        let j = rule.decide(r, unranked);
        if !unranked.contains(j) {
            return Err(MpfsInconsistency {
                rule: rule.id().to_string(),
                position: r.clone(),
                free: unranked,
                decided: j,
                expected: unranked.first().unwrap_or(0),
            });
        }
        order.push(j);
        unranked.remove(j);
    }
    let mut rank = vec![0usize; k];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..k).collect();
    for _ in 0..trials {
        indices.shuffle(&mut rng);
        let size = rng.gen_range(1..=k);
        let free: FreeSet = indices[..size].iter().copied().collect();
        let expected = free.iter().min_by_key(|&j| rank[j]).expect("non-empty");
        let decided = rule.decide(r, free);
        if decided != expected {
            return Err(MpfsInconsistency {
                rule: rule.id().to_string(),
                position: r.clone(),
                free,
                decided,
                expected,
            });
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, rat};

    /// Always the leftmost free server.
    struct Leftmost(usize);

    impl PriorityRule for Leftmost {
        fn id(&self) -> &str {
            "leftmost"
        }
        fn server_count(&self) -> usize {
            self.0
        }
        fn decide(&self, _r: &Rational, free: FreeSet) -> usize {
            free.first().unwrap()
        }
    }

    /// Prefers server 0 over 1 over 2, except that with all three free it picks 2.
    struct Fickle;

    impl PriorityRule for Fickle {
        fn id(&self) -> &str {
            "fickle"
        }
        fn server_count(&self) -> usize {
            3
        }
        fn decide(&self, _r: &Rational, free: FreeSet) -> usize {
            if free.len() == 3 {
                2
            } else {
                free.first().unwrap()
            }
        }
    }

    /// Ignores the free set.
    struct Broken;

    impl PriorityRule for Broken {
        fn id(&self) -> &str {
            "broken"
        }
        fn server_count(&self) -> usize {
            2
        }
        fn decide(&self, _r: &Rational, _free: FreeSet) -> usize {
            0
        }
    }

    fn layout(xs: &[i64]) -> ServerLayout {
        ServerLayout::from_integers(xs).unwrap()
    }

    #[test]
    fn free_set_basics() {
        let mut f = FreeSet::all(4);
        assert_eq!(f.len(), 4);
        f.remove(1);
        assert_eq!(f.iter().collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(f.first(), Some(0));
        assert_eq!(f.last(), Some(3));
        assert_eq!(FreeSet::range(1, 2).iter().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(FreeSet::all(64).len(), 64);
        assert_eq!(FreeSet::range(0, 63).len(), 64);
        assert!(FreeSet::EMPTY.first().is_none());
    }

    #[test]
    fn surrounding_examples() {
        let s = layout(&[0, 2, 4]);
        let f: FreeSet = [0, 2].into_iter().collect();
        assert_eq!(
            surrounding_servers(&int(1), f, &s),
            Surrounding { left: Some(0), right: Some(2) }
        );
        let s = layout(&[0, 2]);
        assert_eq!(
            surrounding_servers(&int(1), FreeSet::single(1), &s),
            Surrounding { left: None, right: Some(1) }
        );
        let both = surrounding_servers(&int(2), FreeSet::all(2), &s);
        assert_eq!(both, Surrounding { left: Some(1), right: Some(1) });
        assert!(both.is_single());
        assert_eq!(both.count(), 1);
    }

    #[test]
    fn empty_sequence_gives_empty_trace() {
        let inst = Instance::unit(layout(&[0, 1]));
        let t = simulate(&Leftmost(2), &inst, &RequestSequence::default()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.total_cost, int(0));
    }

    #[test]
    fn capacities_tracked() {
        let inst = Instance::new(layout(&[0, 1]), vec![2, 1]).unwrap();
        let seq = RequestSequence::new(vec![int(5); 3]);
        let t = simulate(&Leftmost(2), &inst, &seq).unwrap();
        assert_eq!(t.assignment, vec![0, 0, 1]);
        assert_eq!(t.free_snapshots, vec![vec![1, 1], vec![0, 1], vec![0, 0]]);
        assert_eq!(t.total_cost, int(5 + 5 + 4));
    }

    #[test]
    fn simulate_rejects_bad_inputs() {
        let inst = Instance::unit(layout(&[0, 1]));
        let seq = RequestSequence::new(vec![int(0); 3]);
        assert!(matches!(
            simulate(&Leftmost(2), &inst, &seq),
            Err(OfalError::CapacityExceeded { .. })
        ));
        assert!(matches!(
            simulate(&Leftmost(3), &inst, &RequestSequence::default()),
            Err(OfalError::RuleMismatch { .. })
        ));
        let seq = RequestSequence::new(vec![int(0); 2]);
        assert!(matches!(
            simulate(&Broken, &inst, &seq),
            Err(OfalError::RuleChoseFullServer { server: 0, .. })
        ));
    }

    #[test]
    fn priority_order_of_consistent_rule() {
        assert_eq!(
            derive_priority_order(&Leftmost(3), &rat(1, 2), 100, 1).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(derive_priority_order(&Leftmost(1), &int(0), 10, 1).unwrap(), vec![0]);
    }

    #[test]
    fn priority_order_detects_inconsistency() {
        // Derived order is (2, 0, 1); any pair containing 2 exposes the switch.
        let err = derive_priority_order(&Fickle, &int(0), 1000, 7).unwrap_err();
        assert_eq!(err.expected, 2);
        assert_ne!(err.decided, 2);
    }

    #[test]
    fn engine_take_and_give_back() {
        let inst = Instance::new(layout(&[0, 1]), vec![1, 2]).unwrap();
        let mut st = EngineState::new(&inst);
        st.take(1);
        st.take(1);
        assert!(!st.free().contains(1));
        st.give_back(1);
        assert!(st.free().contains(1));
        assert_eq!(st.remaining(), &[1, 1]);
    }
}
