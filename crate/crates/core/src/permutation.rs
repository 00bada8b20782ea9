//! The Permutation algorithm.
//!
//! The algorithm keeps a minimum-cost matching of the requests seen so far.
//! When a request arrives, the matching is repaired by one shortest augmenting
//! path, which raises the load of exactly one server by one unit. The online
//! algorithm sends the request to that server. Past online decisions are never
//! revised; only the internal prefix matching is.

use num_traits::Zero;

use crate::error::{OfalError, Result};
use crate::model::{dist, validate_pair, AssignmentTrace, Instance, Rational, RequestSequence};

/// Minimum-cost matching of the prefix seen so far.
#[derive(Clone, Debug)]
pub struct PrefixOptState {
    positions: Vec<Rational>,
    capacities: Vec<u32>,
    used: Vec<u32>,
    requests: Vec<Rational>,
    /// Server of each seen request in the current prefix matching.
    matched: Vec<usize>,
    /// Requests currently held by each server.
    holders: Vec<Vec<usize>>,
    cost: Rational,
}

/// Request `request` moves from `from` to `to` along an augmenting path.
#[derive(Clone, Copy, Debug)]
struct Move {
    from: usize,
    request: usize,
}

impl PrefixOptState {
    pub fn new(inst: &Instance) -> Self {
        let k = inst.len();
        Self {
            positions: inst.layout().positions().to_vec(),
            capacities: inst.capacities().to_vec(),
            used: vec![0; k],
            requests: Vec::new(),
            matched: Vec::new(),
            holders: vec![Vec::new(); k],
            cost: Rational::zero(),
        }
    }

    pub fn cost(&self) -> &Rational {
        &self.cost
    }

    pub fn used(&self) -> &[u32] {
        &self.used
    }

    /// Server of every seen request in the prefix matching.
    pub fn matching(&self) -> &[usize] {
        &self.matched
    }

    /// Adds `r` and returns the one server whose load increased.
    ///
    /// Among equally short augmenting paths the one ending at the leftmost
    /// server wins.
    pub fn step(&mut self, r: Rational) -> Result<usize> {
        let k = self.positions.len();
        if (0..k).all(|j| self.used[j] >= self.capacities[j]) {
            return Err(OfalError::CapacityExceeded {
                requests: self.requests.len() + 1,
                capacity: self.capacities.iter().map(|&c| u64::from(c)).sum(),
            });
        }

        // Cheapest way to shift one held request from u to v.
        let mut shift: Vec<Vec<Option<(Rational, usize)>>> = vec![vec![None; k]; k];
        for u in 0..k {
            for &q in &self.holders[u] {
                let here = dist(&self.requests[q], &self.positions[u]);
                for v in 0..k {
                    if v == u {
                        continue;
                    }
                    let delta = dist(&self.requests[q], &self.positions[v]) - &here;
                    let better = match &shift[u][v] {
                        None => true,
                        Some((d, held)) => delta < *d || (delta == *d && q < *held),
                    };
                    if better {
                        shift[u][v] = Some((delta, q));
                    }
                }
            }
        }

        let mut reach: Vec<Rational> = self.positions.iter().map(|s| dist(&r, s)).collect();
        let mut via: Vec<Option<Move>> = vec![None; k];
        for _ in 1..k {
            let mut changed = false;
            for u in 0..k {
                for v in 0..k {
                    if let Some((delta, q)) = &shift[u][v] {
                        let cand = &reach[u] + delta;
                        if cand < reach[v] {
                            reach[v] = cand;
                            via[v] = Some(Move { from: u, request: *q });
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let end = (0..k)
            .filter(|&v| self.used[v] < self.capacities[v])
            .min_by(|&a, &b| reach[a].cmp(&reach[b]).then(a.cmp(&b)))
            .expect("some server has spare capacity");

        let new_index = self.requests.len();
        self.requests.push(r);
        self.matched.push(usize::MAX);
        let mut v = end;
        let mut hops = 0;
        while let Some(m) = via[v] {
            hops += 1;
            debug_assert!(hops <= k, "augmenting path revisits a server");
            let held = &mut self.holders[m.from];
            let pos = held.iter().position(|&q| q == m.request).expect("held request");
            held.swap_remove(pos);
            self.holders[v].push(m.request);
            self.matched[m.request] = v;
            v = m.from;
        }
        self.holders[v].push(new_index);
        self.matched[new_index] = v;
        self.used[end] += 1;
        self.cost += &reach[end];
        Ok(end)
    }
}

#[derive(Clone, Debug)]
pub struct PermutationRun {
    pub trace: AssignmentTrace,
    /// Optimal cost of each prefix, as maintained by the algorithm.
    pub prefix_costs: Vec<Rational>,
}

pub fn permutation_run(inst: &Instance, seq: &RequestSequence) -> Result<PermutationRun> {
    validate_pair(inst, seq)?;
    let mut state = PrefixOptState::new(inst);
    let mut assignment = Vec::with_capacity(seq.len());
    let mut prefix_costs = Vec::with_capacity(seq.len());
    for r in seq.iter() {
        assignment.push(state.step(r.clone())?);
        prefix_costs.push(state.cost().clone());
    }
    #[cfg(debug_assertions)]
    if seq.len() <= 64 {
        let full = crate::opt::noncrossing_dp_cost(inst, seq)?;
        debug_assert_eq!(prefix_costs.last().cloned().unwrap_or_default(), full);
    }
    Ok(PermutationRun {
        trace: AssignmentTrace::from_assignment("permutation", inst, seq, assignment)?,
        prefix_costs,
    })
}
