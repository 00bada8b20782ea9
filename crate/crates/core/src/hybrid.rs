//! Hybrids of an MPFS rule: follow the rule, deviate once, then follow it again.
//!
//! `H_{i,s}` serves requests before `i` like the rule, sends request `i` to `s`
//! and lets the rule decide afterwards. The free sets of the two runs differ by
//! one server on each side (`a_t` free only in the base run, `h_t` free only in
//! the hybrid) until they merge. The chains are read off the free-set
//! snapshots; the checks below then test the transition rules against them.

use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::{random_sequence, Distribution};
use crate::alpha::alpha_fast;
use crate::engine::{simulate, surrounding_servers, EngineState, FreeSet, PriorityRule};
use crate::error::{OfalError, Result};
use crate::model::{dist, AssignmentTrace, Instance, Rational, RequestSequence, ServerLayout};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HybridViolation {
    pub property: &'static str,
    pub step: usize,
    pub detail: String,
}

fn violation(property: &'static str, step: usize, detail: String) -> HybridViolation {
    HybridViolation { property, step, detail }
}

/// Base and hybrid runs with the chains extracted from them.
///
/// Steps are 0-based. `a[u]` and `h[u]` belong to step `deviation + u`, the last
/// entry to the merge step `t*`. When the runs never merge within the sequence,
/// `merged` is false and the chains run to the final step.
#[derive(Clone, Debug, Serialize)]
pub struct HybridTrace {
    pub base: AssignmentTrace,
    pub hybrid: AssignmentTrace,
    pub deviation: usize,
    pub forced: usize,
    pub a: Vec<usize>,
    pub h: Vec<usize>,
    pub merged: bool,
    /// Snapshots that broke the one-server-each-side shape.
    pub shape: Vec<HybridViolation>,
}

impl HybridTrace {
    /// The merge step `t*`.
    pub fn last_step(&self) -> usize {
        self.deviation + self.a.len() - 1
    }
}

fn free_after(trace: &AssignmentTrace, t: usize) -> FreeSet {
    FreeSet::from_remaining(&trace.free_snapshots[t])
}

/// Runs `rule` and its hybrid deviating at step `i` to server `s`.
pub fn run_hybrid<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    seq: &RequestSequence,
    i: usize,
    s: usize,
) -> Result<HybridTrace> {
    if !inst.is_unit() {
        return Err(OfalError::HybridPrecondition("hybrids need unit capacities".into()));
    }
    if i >= seq.len() {
        return Err(OfalError::HybridPrecondition(format!(
            "deviation step {i} beyond sequence of length {}",
            seq.len()
        )));
    }
    let base = simulate(rule, inst, seq)?;
    let mut state = EngineState::new(inst);
    let mut assignment = Vec::with_capacity(seq.len());
    for (t, r) in seq.iter().enumerate() {
        if t == i {
            if s >= inst.len() || !state.free().contains(s) {
                return Err(OfalError::HybridPrecondition(format!(
                    "server {s} is not free at step {i}"
                )));
            }
            if s == base.assignment[i] {
                return Err(OfalError::HybridPrecondition(format!(
                    "server {s} is the rule's own choice at step {i}"
                )));
            }
            state.take(s);
            assignment.push(s);
        } else {
            assignment.push(state.step(rule, r)?);
        }
    }
    let hybrid = AssignmentTrace::from_assignment(format!("{}/hybrid", rule.id()), inst, seq, assignment)?;

    let mut a = Vec::new();
    let mut h = Vec::new();
    let mut shape = Vec::new();
    let mut merged = false;
    for t in i..seq.len() {
        let fa = free_after(&base, t);
        let fh = free_after(&hybrid, t);
        let only_a = fa.minus(fh);
        let only_h = fh.minus(fa);
        if merged {
            if !only_a.is_empty() || !only_h.is_empty() {
                shape.push(violation("merge", t, "free sets differ again after merging".into()));
            }
            continue;
        }
        match (only_a.len(), only_h.len()) {
            (0, 0) if t > i => merged = true,
            (1, 1) => {
                a.push(only_a.first().expect("one"));
                h.push(only_h.first().expect("one"));
            }
            (x, y) => {
                shape.push(violation(
                    "difference",
                    t,
                    format!("free sets differ by {x} and {y} servers"),
                ));
                break;
            }
        }
    }
    Ok(HybridTrace { base, hybrid, deviation: i, forced: s, a, h, merged, shape })
}

/// One-server-each-side shape and its starting point `a_i = s`, `h_i = s_A(r_i)`.
pub fn check_shape(ht: &HybridTrace) -> Vec<HybridViolation> {
    let mut out = ht.shape.clone();
    let i = ht.deviation;
    if ht.a.first() != Some(&ht.forced) || ht.h.first() != Some(&ht.base.assignment[i]) {
        out.push(violation("start", i, format!("chains start at {:?}/{:?}", ht.a.first(), ht.h.first())));
    }
    out
}

/// Transition rules between consecutive chain elements and at the merge.
pub fn check_transition_rules(ht: &HybridTrace) -> Vec<HybridViolation> {
    let mut out = Vec::new();
    let i = ht.deviation;
    let base = &ht.base.assignment;
    let hyb = &ht.hybrid.assignment;
    for u in 0..ht.a.len().saturating_sub(1) {
        let t = i + u;
        let a_moves = ht.a[u] != ht.a[u + 1];
        let h_moves = ht.h[u] != ht.h[u + 1];
        if a_moves && h_moves {
            out.push(violation("P1", t, "both chains move".into()));
            continue;
        }
        if a_moves && (base[t + 1] != ht.a[u] || hyb[t + 1] != ht.a[u + 1]) {
            out.push(violation(
                "P2",
                t,
                format!(
                    "a moves {}→{} but runs chose {}/{}",
                    ht.a[u], ht.a[u + 1], base[t + 1], hyb[t + 1]
                ),
            ));
        }
        if h_moves && (base[t + 1] != ht.h[u + 1] || hyb[t + 1] != ht.h[u]) {
            out.push(violation(
                "P2",
                t,
                format!(
                    "h moves {}→{} but runs chose {}/{}",
                    ht.h[u], ht.h[u + 1], base[t + 1], hyb[t + 1]
                ),
            ));
        }
    }
    if ht.merged && !ht.a.is_empty() {
        let t = ht.last_step();
        let (a, h) = (ht.a[ht.a.len() - 1], ht.h[ht.h.len() - 1]);
        if base[t + 1] != a || hyb[t + 1] != h {
            out.push(violation(
                "P3",
                t,
                format!("merge step chose {}/{}, chains end at {a}/{h}", base[t + 1], hyb[t + 1]),
            ));
        }
    }
    out
}

/// Servers of `free` strictly between servers `x` and `y`.
fn strictly_between(free: FreeSet, x: usize, y: usize) -> FreeSet {
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    if hi - lo < 2 {
        return FreeSet::EMPTY;
    }
    free.intersect(FreeSet::range(lo + 1, hi - 1))
}

/// Result of the monotone-chain check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ChainCheck {
    /// A free server sat between the two initial choices.
    OutOfPrecondition,
    Checked(Vec<HybridViolation>),
}

/// Chains move monotonically away from each other with no common free server
/// between them, provided no server was free between `s` and `s_A(r_i)` before
/// the deviation.
pub fn check_chain_monotone(ht: &HybridTrace, inst: &Instance) -> ChainCheck {
    let i = ht.deviation;
    if ht.a.is_empty() {
        return ChainCheck::Checked(Vec::new());
    }
    let before = if i == 0 {
        FreeSet::all(inst.len())
    } else {
        free_after(&ht.base, i - 1)
    };
    if !strictly_between(before, ht.forced, ht.base.assignment[i]).is_empty() {
        return ChainCheck::OutOfPrecondition;
    }
    let mut out = Vec::new();
    let a_left = ht.a[0] < ht.h[0];
    for u in 0..ht.a.len() {
        let t = i + u;
        let common = free_after(&ht.base, t).intersect(free_after(&ht.hybrid, t));
        let between = strictly_between(common, ht.a[u], ht.h[u]);
        if !between.is_empty() {
            out.push(violation("no-free-between", t, format!("free {between:?} between chains")));
        }
        if (ht.a[u] < ht.h[u]) != a_left {
            out.push(violation("order", t, "chains crossed".into()));
        }
        if u > 0 {
            let ok = if a_left {
                ht.a[u] <= ht.a[u - 1] && ht.h[u] >= ht.h[u - 1]
            } else {
                ht.a[u] >= ht.a[u - 1] && ht.h[u] <= ht.h[u - 1]
            };
            if !ok {
                out.push(violation("monotone", t, "a chain moved inwards".into()));
            }
        }
    }
    ChainCheck::Checked(out)
}

/// Servers the C3 condition deviates to at step `i`: the surrounding servers of
/// `r_i` other than the rule's choice, or, when the choice is the only
/// surrounding server, the free servers just left and just right of it.
pub fn c3_candidates(r: &Rational, free: FreeSet, choice: usize, layout: &ServerLayout) -> Vec<usize> {
    let sur = surrounding_servers(r, free, layout);
    let mut out: Vec<usize> = [sur.left, sur.right]
        .into_iter()
        .flatten()
        .filter(|&j| j != choice)
        .collect();
    out.dedup();
    if out.is_empty() {
        let others = free.minus(FreeSet::single(choice));
        let left = others.iter().filter(|&j| j < choice).last();
        let right = others.iter().find(|&j| j > choice);
        out.extend(left);
        out.extend(right);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct C3Failure {
    #[serde(with = "crate::model::serde_coords")]
    pub sequence: Vec<Rational>,
    pub step: usize,
    pub forced: usize,
    pub merge_server: usize,
    #[serde(with = "crate::model::serde_coord")]
    pub lhs: Rational,
    #[serde(with = "crate::model::serde_coord")]
    pub rhs: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct C3Report {
    pub rule: String,
    pub trials: usize,
    pub hybrids: usize,
    pub seed: u64,
    pub failures: Vec<C3Failure>,
}

/// Samples full-length sequences on `S` with unit capacities and checks
/// `|h_{t*} − r_i| ≤ α(S)·|r_i − a_i|` for every step and every C3 deviation.
pub fn check_c3<R: PriorityRule + ?Sized>(
    rule: &R,
    layout: &ServerLayout,
    trials: usize,
    seed: u64,
) -> Result<C3Report> {
    let k = layout.len();
    let mut report = C3Report { rule: rule.id().to_string(), trials, hybrids: 0, seed, failures: Vec::new() };
    if k < 2 {
        return Ok(report);
    }
    let inst = Instance::unit(layout.clone());
    let alpha = alpha_fast(layout).alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let family = if rng.gen_bool(0.5) { Distribution::Uniform } else { Distribution::Mixture };
        let seq = random_sequence(&inst, k, family, &mut rng)?;
        let base = simulate(rule, &inst, &seq)?;
        for i in 0..k {
            let free = if i == 0 { FreeSet::all(k) } else { free_after(&base, i - 1) };
            let choice = base.assignment[i];
            for s in c3_candidates(&seq[i], free, choice, layout) {
                let ht = run_hybrid(rule, &inst, &seq, i, s)?;
                report.hybrids += 1;
                let r = &seq[i];
                let Some(&h_end) = ht.h.last() else {
                    return Err(OfalError::HybridPrecondition(format!(
                        "{} produced a malformed hybrid at step {i}",
                        rule.id()
                    )));
                };
                let lhs = dist(layout.position(h_end), r);
                let rhs = &alpha * dist(r, layout.position(s));
                if lhs > rhs {
                    report.failures.push(C3Failure {
                        sequence: seq.requests.clone(),
                        step: i,
                        forced: s,
                        merge_server: h_end,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Outcome of moving the rightmost request onto the rightmost free server of
/// `S` to its right, for a guarded rule on `S ∪ {s_(k+1)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MoveClaim {
    /// The precondition does not apply (no such server right of the request).
    NotApplicable,
    /// `(cost drop, allowed drop)`.
    Checked(Rational, Rational),
}

/// Cost drop of a guarded rule when the rightmost request `r_i` is moved to
/// `s*`, the rightmost server of `S` free before step `i`, compared with
/// `(2α(S)+1)·|r_i − s*|`. `rule` must cover `S` plus the extra server.
pub fn move_claim<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    seq: &RequestSequence,
    alpha: &Rational,
) -> Result<MoveClaim> {
    if seq.is_empty() {
        return Ok(MoveClaim::NotApplicable);
    }
    let k = inst.len() - 1;
    let i = (0..seq.len())
        .max_by(|&x, &y| seq[x].cmp(&seq[y]).then(y.cmp(&x)))
        .expect("non-empty");
    let base = simulate(rule, inst, seq)?;
    let free = if i == 0 {
        FreeSet::all(inst.len())
    } else {
        free_after(&base, i - 1)
    };
    let Some(star) = free.intersect(FreeSet::all(k)).last() else {
        return Ok(MoveClaim::NotApplicable);
    };
    let s_star = inst.position(star);
    if !(&seq[i] < s_star) {
        return Ok(MoveClaim::NotApplicable);
    }
    let mut moved = seq.clone();
    moved.requests[i] = s_star.clone();
    let after = simulate(rule, inst, &moved)?;
    let drop = &base.total_cost - &after.total_cost;
    let allowed = (alpha * Rational::from_integer(2.into()) + Rational::from_integer(1.into()))
        * dist(&seq[i], s_star);
    debug_assert!(!allowed.is_zero());
    Ok(MoveClaim::Checked(drop, allowed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{Greedy, Ptcp};
    use crate::model::{int, rat};

    fn unit(xs: &[i64]) -> Instance {
        Instance::unit(ServerLayout::from_integers(xs).unwrap())
    }

    #[test]
    fn first_difference_is_the_two_choices() {
        let inst = unit(&[0, 2, 4]);
        let rule = Ptcp::new(inst.layout());
        let seq = RequestSequence::new(vec![rat(1, 2), int(3), int(4)]);
        let ht = run_hybrid(&rule, &inst, &seq, 0, 1).unwrap();
        assert_eq!(ht.base.assignment[0], 0);
        assert_eq!((ht.a[0], ht.h[0]), (1, 0));
        assert!(check_shape(&ht).is_empty());
    }

    #[test]
    fn immediate_merge() {
        // Base: 0.5 → 0, then 1.5 → 2 (critical point 1 of {0,2}); hybrid takes 2
        // first and sends 1.5 to 0. Both end with everything full.
        let inst = unit(&[0, 2]);
        let rule = Ptcp::new(inst.layout());
        let seq = RequestSequence::new(vec![rat(1, 2), rat(3, 2)]);
        let ht = run_hybrid(&rule, &inst, &seq, 0, 1).unwrap();
        assert!(ht.merged);
        assert_eq!(ht.last_step(), 0);
        assert!(check_transition_rules(&ht).is_empty());
        assert_eq!(check_chain_monotone(&ht, &inst), ChainCheck::Checked(vec![]));
    }

    #[test]
    fn rejects_bad_deviations() {
        let inst = unit(&[0, 2]);
        let rule = Greedy::new(inst.layout());
        let seq = RequestSequence::new(vec![rat(1, 2), rat(3, 2)]);
        assert!(run_hybrid(&rule, &inst, &seq, 0, 0).is_err());
        assert!(run_hybrid(&rule, &inst, &seq, 1, 0).is_err());
        let capped = Instance::uniform(inst.layout().clone(), 2).unwrap();
        assert!(run_hybrid(&rule, &capped, &seq, 0, 1).is_err());
    }

    #[test]
    fn both_chains_moving_is_flagged() {
        let inst = unit(&[0, 1, 2, 3]);
        let rule = Greedy::new(inst.layout());
        let seq = RequestSequence::new(vec![int(0), int(1), int(2)]);
        let mut ht = run_hybrid(&rule, &inst, &seq, 0, 1).unwrap();
        ht.a = vec![1, 2];
        ht.h = vec![0, 3];
        ht.merged = false;
        let v = check_transition_rules(&ht);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].property, "P1");
    }

    #[test]
    fn precondition_detection() {
        let inst = unit(&[0, 1, 2]);
        let rule = Greedy::new(inst.layout());
        let seq = RequestSequence::new(vec![int(0), int(1), int(2)]);
        let ht = run_hybrid(&rule, &inst, &seq, 0, 2).unwrap();
        assert_eq!(check_chain_monotone(&ht, &inst), ChainCheck::OutOfPrecondition);
    }

    #[test]
    fn c3_fallback_candidates() {
        let layout = ServerLayout::from_integers(&[0, 2, 4, 6]).unwrap();
        // Request on free server 2: its only surrounding server; fall back to 1 and 3.
        assert_eq!(c3_candidates(&int(4), FreeSet::all(4), 2, &layout), vec![1, 3]);
        // Request between 2 and 4 choosing 2: deviate to 4.
        assert_eq!(c3_candidates(&int(3), FreeSet::all(4), 1, &layout), vec![2]);
        // Only the choice is free.
        assert!(c3_candidates(&int(3), FreeSet::single(1), 1, &layout).is_empty());
    }

    #[test]
    fn c3_vacuous_for_one_server() {
        let layout = ServerLayout::from_integers(&[5]).unwrap();
        let rep = check_c3(&Ptcp::new(&layout), &layout, 10, 1).unwrap();
        assert_eq!(rep.hybrids, 0);
    }

    #[test]
    fn c3_holds_for_ptcp_sample() {
        let layout = ServerLayout::from_integers(&[0, 1, 3, 7, 8]).unwrap();
        let rep = check_c3(&Ptcp::new(&layout), &layout, 200, 3).unwrap();
        assert!(rep.hybrids > 0);
        assert!(rep.failures.is_empty(), "{:?}", rep.failures.first());
    }
}
