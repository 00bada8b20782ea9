//! Concrete matching rules: PTCP, greedy, and the guarded extension by one
//! server on the right.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::engine::{FreeSet, PriorityRule};
use crate::error::{OfalError, Result};
use crate::model::{dist, serde_coord, Rational, ServerLayout};

/// One node of the PTCP recursion over servers `lo..=hi`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitNode {
    pub lo: usize,
    pub hi: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Split of a node at its widest gap, between servers `last_left` and `last_left + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Split {
    pub last_left: usize,
    /// Width of the split gap.
    #[serde(with = "serde_coord")]
    pub gap: Rational,
    /// Span of the left block.
    #[serde(with = "serde_coord")]
    pub left_span: Rational,
    /// Span of the right block.
    #[serde(with = "serde_coord")]
    pub right_span: Rational,
    /// Offset of the critical point from the last left server.
    #[serde(with = "serde_coord")]
    pub offset: Rational,
    #[serde(with = "serde_coord")]
    pub critical_point: Rational,
    pub left: usize,
    pub right: usize,
}

/// The PTCP recursion, stored as an arena with the root at index 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitTree {
    pub nodes: Vec<SplitNode>,
}

/// Offset `D(Δ2+D)/((Δ1+D)+(Δ2+D))` of the critical point inside a gap `D`
/// separating blocks of spans `Δ1` (left) and `Δ2` (right).
pub fn critical_offset(gap: &Rational, left_span: &Rational, right_span: &Rational) -> Rational {
    let right_weight = right_span + gap;
    let total = &(left_span + gap) + &right_weight;
    gap * right_weight / total
}

impl SplitTree {
    /// Splits recursively at the leftmost widest gap until every block is a
    /// single server.
    pub fn build(layout: &ServerLayout) -> Self {
        let mut nodes = Vec::with_capacity(2 * layout.len() - 1);
        Self::grow(layout, 0, layout.len() - 1, &mut nodes);
        Self { nodes }
    }

    fn grow(layout: &ServerLayout, lo: usize, hi: usize, nodes: &mut Vec<SplitNode>) -> usize {
        let id = nodes.len();
        nodes.push(SplitNode { lo, hi, split: None });
        if lo == hi {
            return id;
        }
        let xs = layout.positions();
        let mut a = lo;
        let mut gap = &xs[lo + 1] - &xs[lo];
        for u in lo + 1..hi {
            let g = &xs[u + 1] - &xs[u];
            if g > gap {
                gap = g;
                a = u;
            }
        }
        let left_span = &xs[a] - &xs[lo];
        let right_span = &xs[hi] - &xs[a + 1];
        let offset = critical_offset(&gap, &left_span, &right_span);
        let critical_point = &xs[a] + &offset;
        let left = Self::grow(layout, lo, a, nodes);
        let right = Self::grow(layout, a + 1, hi, nodes);
        nodes[id].split = Some(Split {
            last_left: a,
            gap,
            left_span,
            right_span,
            offset,
            critical_point,
            left,
            right,
        });
        id
    }

    pub fn root(&self) -> &SplitNode {
        &self.nodes[0]
    }

    pub fn splits(&self) -> impl Iterator<Item = (&SplitNode, &Split)> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.as_ref().map(|s| (n, s)))
    }

    pub fn critical_points(&self) -> Vec<Rational> {
        self.splits().map(|(_, s)| s.critical_point.clone()).collect()
    }

    /// PTCP's choice for request `r` among `free`.
    ///
    /// At every split the request goes to the left block when it lies at or
    /// left of the critical point and the left block has a free server, or
    /// when the right block has none; otherwise to the right block.
    pub fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        let mut node = &self.nodes[0];
        loop {
            let here = free.intersect(FreeSet::range(node.lo, node.hi));
            debug_assert!(!here.is_empty());
            if here.len() == 1 {
                return here.first().expect("non-empty");
            }
            let split = match &node.split {
                None => return node.lo,
                Some(s) => s,
            };
            let left_free = !here.intersect(FreeSet::range(node.lo, split.last_left)).is_empty();
            let right_free = !here
                .intersect(FreeSet::range(split.last_left + 1, node.hi))
                .is_empty();
            let go_left = (r <= &split.critical_point && left_free) || !right_free;
            node = &self.nodes[if go_left { split.left } else { split.right }];
        }
    }
}

/// Policy Transition at Critical Point.
#[derive(Clone, Debug)]
pub struct Ptcp {
    tree: SplitTree,
    k: usize,
}

impl Ptcp {
    pub fn new(layout: &ServerLayout) -> Self {
        Self {
            tree: SplitTree::build(layout),
            k: layout.len(),
        }
    }

    pub fn tree(&self) -> &SplitTree {
        &self.tree
    }
}

impl PriorityRule for Ptcp {
    fn id(&self) -> &str {
        "ptcp"
    }

    fn server_count(&self) -> usize {
        self.k
    }

    fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        self.tree.decide(r, free)
    }
}

/// Nearest free server; exact ties go to the left.
#[derive(Clone, Debug)]
pub struct Greedy {
    positions: Vec<Rational>,
}

impl Greedy {
    pub fn new(layout: &ServerLayout) -> Self {
        Self {
            positions: layout.positions().to_vec(),
        }
    }
}

pub fn greedy_decide(r: &Rational, free: FreeSet, layout: &ServerLayout) -> usize {
    nearest(r, free, layout.positions())
}

fn nearest(r: &Rational, free: FreeSet, positions: &[Rational]) -> usize {
    let mut best: Option<(usize, Rational)> = None;
    for j in free.iter() {
        let d = dist(r, &positions[j]);
        match &best {
            Some((_, b)) if &d >= b => {}
            _ => best = Some((j, d)),
        }
    }
    best.expect("free set must be non-empty").0
}

impl PriorityRule for Greedy {
    fn id(&self) -> &str {
        "greedy"
    }

    fn server_count(&self) -> usize {
        self.positions.len()
    }

    fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        nearest(r, free, &self.positions)
    }
}

/// A rule over `S` extended by one server at `s_k + d`.
///
/// Requests at or left of `s_k + x` are served by the base rule while `S` has a
/// free server; requests right of it go to the new server while it is free.
#[derive(Clone, Debug)]
pub struct GuardedRule<R> {
    base: R,
    k: usize,
    threshold: Rational,
    id: String,
}

impl<R: PriorityRule> GuardedRule<R> {
    pub fn threshold(&self) -> &Rational {
        &self.threshold
    }

    pub fn base(&self) -> &R {
        &self.base
    }
}

/// Builds the guarded rule and the extended layout `S ∪ {s_k + d}`.
pub fn guard_rule<R: PriorityRule>(
    base: R,
    layout: &ServerLayout,
    d: &Rational,
    x: &Rational,
) -> Result<(GuardedRule<R>, ServerLayout)> {
    if base.server_count() != layout.len() {
        return Err(OfalError::RuleMismatch {
            rule: base.id().to_string(),
            rule_servers: base.server_count(),
            servers: layout.len(),
        });
    }
    if !(d > &Rational::zero()) {
        return Err(OfalError::InvalidParameter(format!("d must be positive, got {d}")));
    }
    if !(x > &Rational::zero() && x < d) {
        return Err(OfalError::InvalidParameter(format!(
            "x must lie strictly between 0 and d={d}, got {x}"
        )));
    }
    let extended = layout.extended(layout.last() + d)?;
    let id = format!("{}+guard", base.id());
    Ok((
        GuardedRule {
            k: layout.len(),
            threshold: layout.last() + x,
            base,
            id,
        },
        extended,
    ))
}

impl<R: PriorityRule> PriorityRule for GuardedRule<R> {
    fn id(&self) -> &str {
        &self.id
    }

    fn server_count(&self) -> usize {
        self.k + 1
    }

    fn decide(&self, r: &Rational, free: FreeSet) -> usize {
        let inner = free.intersect(FreeSet::all(self.k));
        let extra_free = free.contains(self.k);
        if r <= &self.threshold {
            if inner.is_empty() {
                self.k
            } else {
                self.base.decide(r, inner)
            }
        } else if extra_free || inner.is_empty() {
            self.k
        } else {
            self.base.decide(r, inner)
        }
    }
}

/// The priority rules that can be built from a layout alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Ptcp,
    Greedy,
}

impl RuleKind {
    pub const ALL: [RuleKind; 2] = [RuleKind::Ptcp, RuleKind::Greedy];

    pub fn build(self, layout: &ServerLayout) -> Box<dyn PriorityRule> {
        match self {
            RuleKind::Ptcp => Box::new(Ptcp::new(layout)),
            RuleKind::Greedy => Box::new(Greedy::new(layout)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Ptcp => "ptcp",
            RuleKind::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for RuleKind {
    type Err = OfalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptcp" => Ok(RuleKind::Ptcp),
            "greedy" => Ok(RuleKind::Greedy),
            other => Err(OfalError::InvalidParameter(format!("unknown rule {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{derive_priority_order, simulate};
    use crate::model::{int, rat, Instance, RequestSequence};

    fn layout(xs: &[i64]) -> ServerLayout {
        ServerLayout::from_integers(xs).unwrap()
    }

    fn set(xs: &[usize]) -> FreeSet {
        xs.iter().copied().collect()
    }

    #[test]
    fn two_server_tree_splits_at_midpoint() {
        let tree = SplitTree::build(&layout(&[0, 2]));
        let split = tree.root().split.as_ref().unwrap();
        assert_eq!(split.last_left, 0);
        assert_eq!(split.gap, int(2));
        assert_eq!(split.left_span, int(0));
        assert_eq!(split.right_span, int(0));
        assert_eq!(split.offset, int(1));
        assert_eq!(split.critical_point, int(1));
    }

    #[test]
    fn three_server_tree() {
        let tree = SplitTree::build(&layout(&[0, 1, 3]));
        let split = tree.root().split.as_ref().unwrap();
        assert_eq!(split.last_left, 1);
        assert_eq!(split.gap, int(2));
        assert_eq!(split.left_span, int(1));
        assert_eq!(split.right_span, int(0));
        // 2 * (0 + 2) / ((1 + 2) + (0 + 2))
        assert_eq!(split.offset, rat(4, 5));
        assert_eq!(split.critical_point, rat(9, 5));
        assert_eq!(tree.nodes.len(), 5);
    }

    #[test]
    fn single_server_tree_is_leaf() {
        let tree = SplitTree::build(&layout(&[5]));
        assert_eq!(tree.nodes.len(), 1);
        assert!(tree.root().split.is_none());
        assert_eq!(tree.decide(&int(100), FreeSet::all(1)), 0);
    }

    #[test]
    fn max_gap_ties_split_leftmost() {
        let tree = SplitTree::build(&layout(&[0, 2, 4]));
        assert_eq!(tree.root().split.as_ref().unwrap().last_left, 0);
    }

    #[test]
    fn ptcp_decisions() {
        let two = Ptcp::new(&layout(&[0, 2]));
        assert_eq!(two.decide(&int(1), FreeSet::all(2)), 0);
        assert_eq!(two.decide(&rat(101, 100), FreeSet::all(2)), 1);
        assert_eq!(two.decide(&rat(1, 10), set(&[1])), 1);

        let three = Ptcp::new(&layout(&[0, 1, 3]));
        assert_eq!(three.decide(&rat(17, 10), FreeSet::all(3)), 1);
        assert_eq!(three.decide(&rat(19, 10), FreeSet::all(3)), 2);
        assert_eq!(three.decide(&rat(9, 5), FreeSet::all(3)), 1);
        // Right block full: the right-hand request falls back to the left block.
        assert_eq!(three.decide(&rat(19, 10), set(&[0, 1])), 1);
    }

    #[test]
    fn greedy_decisions() {
        let s = layout(&[0, 2, 4, 8]);
        let delta = rat(1, 100);
        let r = int(2) + &delta;
        assert_eq!(greedy_decide(&r, FreeSet::all(4), &s), 1);
        assert_eq!(greedy_decide(&r, set(&[0, 2, 3]), &s), 2);
        let s2 = layout(&[0, 2]);
        assert_eq!(greedy_decide(&int(1), FreeSet::all(2), &s2), 0);
        assert_eq!(greedy_decide(&int(-7), set(&[1]), &s2), 1);
    }

    #[test]
    fn greedy_second_request_moves_on() {
        let inst = Instance::unit(layout(&[0, 2]));
        let seq = RequestSequence::new(vec![rat(9, 10), rat(9, 10)]);
        let t = simulate(&Greedy::new(inst.layout()), &inst, &seq).unwrap();
        assert_eq!(t.assignment, vec![0, 1]);
    }

    #[test]
    fn priority_orders() {
        let g = Greedy::new(&layout(&[0, 2, 4]));
        assert_eq!(derive_priority_order(&g, &rat(1, 2), 1000, 3).unwrap(), vec![0, 1, 2]);
        let p = Ptcp::new(&layout(&[0, 2]));
        assert_eq!(derive_priority_order(&p, &rat(9, 10), 1000, 3).unwrap(), vec![0, 1]);
        let p1 = Ptcp::new(&layout(&[4]));
        assert_eq!(derive_priority_order(&p1, &int(0), 10, 3).unwrap(), vec![0]);
    }

    #[test]
    fn guard_branches() {
        let s = layout(&[0, 1]);
        let (g, ext) = guard_rule(Ptcp::new(&s), &s, &int(3), &int(1)).unwrap();
        assert_eq!(ext.positions(), layout(&[0, 1, 4]).positions());
        assert_eq!(g.threshold(), &int(2));
        assert_eq!(g.server_count(), 3);
        // At the threshold the base rule decides.
        assert_eq!(g.decide(&int(2), FreeSet::all(3)), 1);
        assert_eq!(g.decide(&rat(201, 100), FreeSet::all(3)), 2);
        // S full: left request goes to the extra server.
        assert_eq!(g.decide(&int(0), set(&[2])), 2);
        // Extra server full: right request handled by the base rule.
        assert_eq!(g.decide(&int(3), set(&[0, 1])), 1);
    }

    #[test]
    fn guard_rejects_bad_parameters() {
        let s = layout(&[0, 1]);
        assert!(guard_rule(Ptcp::new(&s), &s, &int(0), &int(0)).is_err());
        assert!(guard_rule(Ptcp::new(&s), &s, &int(2), &int(2)).is_err());
        assert!(guard_rule(Ptcp::new(&s), &s, &int(2), &int(0)).is_err());
        assert!(guard_rule(Ptcp::new(&layout(&[0])), &s, &int(2), &int(1)).is_err());
    }
}
