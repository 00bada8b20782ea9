//! Exact offline optimum of a capacitated assignment on the line.
//!
//! Three independent routes compute the same value: a successive-shortest-path
//! min-cost flow (the reference), a dynamic program over non-crossing
//! assignments, and exhaustive enumeration for small inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{OfalError, Result};
use crate::model::{dist, serde_coord, validate_pair, Instance, Rational, RequestSequence};
use crate::numeric::{abs_diff, Exact, Scaled};

pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptResult {
    #[serde(with = "serde_coord")]
    pub cost: Rational,
    /// Server of each request, in request order.
    pub assignment: Vec<usize>,
}

struct Edge<T> {
    to: usize,
    cap: u32,
    cost: T,
}

/// Min-cost flow by successive shortest paths with Dijkstra over reduced costs.
struct FlowNetwork<T> {
    edges: Vec<Edge<T>>,
    adj: Vec<Vec<usize>>,
}

impl<T: Exact> FlowNetwork<T> {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: u32, cost: T) -> usize {
        let id = self.edges.len();
        let back = T::zero() - cost.clone();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge { to: from, cap: 0, cost: back });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Pushes up to `amount` units; returns (units pushed, total cost).
    /// Initial edge costs must be non-negative.
    fn run(&mut self, source: usize, sink: usize, amount: u32) -> (u32, T) {
        let n = self.adj.len();
        let mut potential = vec![T::zero(); n];
        let mut pushed = 0;
        let mut total = T::zero();
        while pushed < amount {
            let mut best: Vec<Option<T>> = vec![None; n];
            let mut via: Vec<Option<usize>> = vec![None; n];
            let mut heap = BinaryHeap::new();
            best[source] = Some(T::zero());
            heap.push(Reverse((T::zero(), source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if best[u].as_ref() != Some(&d) {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap == 0 {
                        continue;
                    }
                    let v = edge.to;
                    let nd = d.clone() + edge.cost.clone() + potential[u].clone()
                        - potential[v].clone();
                    if best[v].as_ref().map_or(true, |b| &nd < b) {
                        best[v] = Some(nd.clone());
                        via[v] = Some(e);
                        heap.push(Reverse((nd, v)));
                    }
                }
            }
            let Some(_) = best[sink] else { break };
            let reach_max = best.iter().flatten().max().cloned().unwrap_or_else(T::zero);
            for v in 0..n {
                let add = best[v].clone().unwrap_or_else(|| reach_max.clone());
                potential[v] = potential[v].clone() + add;
            }
            let mut v = sink;
            while v != source {
                let e = via[v].expect("path edge");
                self.edges[e].cap -= 1;
                self.edges[e ^ 1].cap += 1;
                total = total + self.edges[e].cost.clone();
                v = self.edges[e ^ 1].to;
            }
            pushed += 1;
        }
        (pushed, total)
    }
}

fn flow_solve<T: Exact>(servers: &[T], caps: &[u32], requests: &[T]) -> (T, Vec<usize>) {
    let n = requests.len();
    let k = servers.len();
    let source = 0;
    let sink = n + k + 1;
    let mut net = FlowNetwork::new(n + k + 2);
    let mut pair_edges = Vec::with_capacity(n * k);
    for (i, r) in requests.iter().enumerate() {
        net.add_edge(source, 1 + i, 1, T::zero());
        for (j, s) in servers.iter().enumerate() {
            pair_edges.push((i, j, net.add_edge(1 + i, 1 + n + j, 1, abs_diff(r, s))));
        }
    }
    for (j, &c) in caps.iter().enumerate() {
        net.add_edge(1 + n + j, sink, c, T::zero());
    }
    let (pushed, cost) = net.run(source, sink, n as u32);
    debug_assert_eq!(pushed as usize, n);
    let mut assignment = vec![usize::MAX; n];
    for (i, j, e) in pair_edges {
        if net.edges[e].cap == 0 {
            assignment[i] = j;
        }
    }
    (cost, assignment)
}

/// Minimum assignment cost when request `i` (sorted ascending) may only be
/// matched monotonically: server `j` takes a contiguous block of at most
/// `caps[j]` sorted requests. `None` if capacity is insufficient.
pub(crate) fn dp_cost<T: Exact>(servers: &[T], caps: &[u32], sorted_requests: &[T]) -> Option<T> {
    let n = sorted_requests.len();
    // row[i]: best cost for the first i requests using the servers seen so far.
    let mut row: Vec<Option<T>> = vec![None; n + 1];
    row[0] = Some(T::zero());
    let mut block = vec![T::zero(); n + 1];
    for (s, &c) in servers.iter().zip(caps) {
        // block[i] = Σ_{t<i} |r_t − s|
        for i in 0..n {
            block[i + 1] = block[i].clone() + abs_diff(&sorted_requests[i], s);
        }
        let mut next: Vec<Option<T>> = vec![None; n + 1];
        for i in 0..=n {
            let max_take = (c as usize).min(i);
            let mut best: Option<T> = None;
            for m in 0..=max_take {
                if let Some(prev) = &row[i - m] {
                    let cand = prev.clone() + (block[i].clone() - block[i - m].clone());
                    if best.as_ref().map_or(true, |b| &cand < b) {
                        best = Some(cand);
                    }
                }
            }
            next[i] = best;
        }
        row = next;
    }
    row[n].take()
}

fn checked(inst: &Instance, seq: &RequestSequence) -> Result<Scaled> {
    validate_pair(inst, seq)?;
    Ok(Scaled::new(
        inst.layout().positions().iter().chain(seq.iter()),
    ))
}

/// Optimal cost via the flow solver, with the lexicographically smallest
/// optimal assignment.
pub fn optimal_cost(inst: &Instance, seq: &RequestSequence) -> Result<OptResult> {
    let scaled = checked(inst, seq)?;
    let k = inst.len();
    let terms = seq.len() + 2;
    let result = match scaled.small(terms) {
        Some(v) => {
            let (servers, requests) = v.split_at(k);
            let (cost, _) = flow_solve(servers, inst.capacities(), requests);
            let assignment = lexicographic_assignment(servers, inst.capacities(), requests, &cost);
            OptResult {
                cost: scaled.unscale_i128(cost),
                assignment,
            }
        }
        None => {
            let (servers, requests) = scaled.values.split_at(k);
            let (cost, _) = flow_solve(servers, inst.capacities(), requests);
            let assignment = lexicographic_assignment(servers, inst.capacities(), requests, &cost);
            OptResult {
                cost: scaled.unscale_int(cost),
                assignment,
            }
        }
    };
    Ok(result)
}

/// Optimal cost via the flow solver only.
pub fn flow_cost(inst: &Instance, seq: &RequestSequence) -> Result<Rational> {
    let scaled = checked(inst, seq)?;
    let k = inst.len();
    Ok(match scaled.small(seq.len() + 2) {
        Some(v) => {
            let (servers, requests) = v.split_at(k);
            scaled.unscale_i128(flow_solve(servers, inst.capacities(), requests).0)
        }
        None => {
            let (servers, requests) = scaled.values.split_at(k);
            scaled.unscale_int(flow_solve(servers, inst.capacities(), requests).0)
        }
    })
}

/// Fixes requests one at a time to the smallest server index that still
/// admits an optimal completion.
fn lexicographic_assignment<T: Exact>(servers: &[T], caps: &[u32], requests: &[T], optimum: &T) -> Vec<usize> {
    let mut caps = caps.to_vec();
    let mut rest: Vec<T> = requests.to_vec();
    rest.sort();
    let mut spent = T::zero();
    let mut assignment = Vec::with_capacity(requests.len());
    for r in requests {
        let pos = rest.binary_search(r).expect("request present");
        rest.remove(pos);
        let mut chosen = None;
        for j in 0..servers.len() {
            if caps[j] == 0 {
                continue;
            }
            caps[j] -= 1;
            let here = spent.clone() + abs_diff(r, &servers[j]);
            if let Some(tail) = dp_cost(servers, &caps, &rest) {
                if &(here.clone() + tail) == optimum {
                    chosen = Some(j);
                    spent = here;
                    break;
                }
            }
            caps[j] += 1;
        }
        assignment.push(chosen.expect("an optimal completion exists"));
    }
    assignment
}

/// Optimal cost by dynamic programming over non-crossing assignments.
pub fn noncrossing_dp_cost(inst: &Instance, seq: &RequestSequence) -> Result<Rational> {
    let scaled = checked(inst, seq)?;
    let k = inst.len();
    let cost = match scaled.small(seq.len() + 2) {
        Some(v) => {
            let (servers, requests) = v.split_at(k);
            let mut sorted = requests.to_vec();
            sorted.sort_unstable();
            scaled.unscale_i128(dp_cost(servers, inst.capacities(), &sorted).expect("feasible"))
        }
        None => {
            let (servers, requests) = scaled.values.split_at(k);
            let mut sorted: Vec<BigInt> = requests.to_vec();
            sorted.sort();
            scaled.unscale_int(dp_cost(servers, inst.capacities(), &sorted).expect("feasible"))
        }
    };
    Ok(cost)
}

/// Number of capacity-respecting assignments of `n` labelled requests,
/// saturating at `u128::MAX`.
pub fn feasible_assignment_count(caps: &[u32], n: usize) -> u128 {
    let mut binom = vec![vec![0u128; n + 1]; n + 1];
    for i in 0..=n {
        binom[i][0] = 1;
        for m in 1..=i {
            binom[i][m] = binom[i - 1][m - 1].saturating_add(binom[i - 1][m]);
        }
    }
    let mut ways = vec![0u128; n + 1];
    ways[0] = 1;
    for &c in caps {
        let mut next = vec![0u128; n + 1];
        for i in 0..=n {
            for m in 0..=(c as usize).min(i) {
                next[i] = next[i].saturating_add(ways[i - m].saturating_mul(binom[i][m]));
            }
        }
        ways = next;
    }
    ways[n]
}

/// Optimal cost by exhaustive enumeration, returning the lexicographically
/// smallest optimal assignment.
pub fn optimal_bruteforce(inst: &Instance, seq: &RequestSequence) -> Result<OptResult> {
    validate_pair(inst, seq)?;
    let count = feasible_assignment_count(inst.capacities(), seq.len());
    if count > BRUTEFORCE_LIMIT {
        return Err(OfalError::GuardExceeded {
            what: "feasible assignments",
            size: count,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let costs: Vec<Vec<Rational>> = seq
        .iter()
        .map(|r| inst.layout().positions().iter().map(|s| dist(r, s)).collect())
        .collect();
    let mut search = Enumeration {
        costs: &costs,
        remaining: inst.capacities().to_vec(),
        current: Vec::with_capacity(seq.len()),
        best: None,
    };
    search.descend(0, Rational::zero());
    let (cost, assignment) = search.best.expect("validated pair has an assignment");
    Ok(OptResult { cost, assignment })
}

struct Enumeration<'a> {
    costs: &'a [Vec<Rational>],
    remaining: Vec<u32>,
    current: Vec<usize>,
    best: Option<(Rational, Vec<usize>)>,
}

impl Enumeration<'_> {
    fn descend(&mut self, t: usize, partial: Rational) {
        if let Some((b, _)) = &self.best {
            if &partial >= b && t < self.costs.len() {
                return;
            }
        }
        if t == self.costs.len() {
            if self.best.as_ref().map_or(true, |(b, _)| &partial < b) {
                self.best = Some((partial, self.current.clone()));
            }
            return;
        }
        for j in 0..self.remaining.len() {
            if self.remaining[j] == 0 {
                continue;
            }
            self.remaining[j] -= 1;
            self.current.push(j);
            self.descend(t + 1, &partial + &self.costs[t][j]);
            self.current.pop();
            self.remaining[j] += 1;
        }
    }
}
