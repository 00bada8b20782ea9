//! Request sequence generators: the two exponential/geometric adversaries,
//! seeded random families and exhaustive grids.

use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Ptcp, SplitTree};
use crate::engine::{simulate, PriorityRule};
use crate::error::{OfalError, Result};
use crate::model::{int, rat, serde_coord, Instance, Rational, RequestSequence, ServerLayout};
use crate::opt::optimal_cost;

/// Largest exponent tried when searching for a valid δ = 10^-m.
const MAX_DELTA_EXPONENT: u32 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GreedyExp,
    PermutationGeo,
    Random,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryParams {
    pub k: usize,
    #[serde(with = "serde_coord")]
    pub delta: Rational,
    /// Capacity given to every server.
    pub capacity: u32,
    pub family: Family,
}

fn pow(q: &Rational, e: usize) -> Rational {
    (0..e).fold(Rational::one(), |acc, _| acc * q)
}

fn tenth_power(m: u32) -> Rational {
    Rational::new(1.into(), num_bigint::BigInt::from(10).pow(m))
}

/// `kδ/(1+kδ) ≤ ε·2^-k`.
pub fn greedy_delta_ok(k: usize, delta: &Rational, eps: &Rational) -> bool {
    let kd = int(k as i64) * delta;
    &kd / (Rational::one() + &kd) <= eps / pow(&int(2), k)
}

/// `δ^k + δ(4k−1) < ε` and `1/(1−δ) < 1 + ε/2`.
pub fn permutation_delta_ok(k: usize, delta: &Rational, eps: &Rational) -> bool {
    if !(delta > &Rational::zero() && delta < &Rational::one()) {
        return false;
    }
    let lhs = pow(delta, k) + delta * int(4 * k as i64 - 1);
    lhs < *eps && Rational::one() / (Rational::one() - delta) < Rational::one() + eps / int(2)
}

fn first_tenth_power(ok: impl Fn(&Rational) -> bool, eps: &Rational) -> Result<Rational> {
    (1..=MAX_DELTA_EXPONENT)
        .map(tenth_power)
        .find(|d| ok(d))
        .ok_or_else(|| OfalError::InvalidParameter(format!("no δ = 10^-m fits ε = {eps}")))
}

fn check_eps(eps: &Rational) -> Result<()> {
    if eps <= &Rational::zero() {
        return Err(OfalError::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    Ok(())
}

impl AdversaryParams {
    /// Greedy family with the largest δ = 10^-m meeting the constraint for `eps`.
    pub fn greedy(k: usize, eps: &Rational, capacity: u32) -> Result<Self> {
        check_eps(eps)?;
        let delta = first_tenth_power(|d| greedy_delta_ok(k, d, eps), eps)?;
        Ok(Self { k, delta, capacity, family: Family::GreedyExp })
    }

    /// Permutation family with the largest δ = 10^-m meeting the constraints for `eps`.
    pub fn permutation(k: usize, eps: &Rational, capacity: u32) -> Result<Self> {
        check_eps(eps)?;
        let delta = first_tenth_power(|d| permutation_delta_ok(k, d, eps), eps)?;
        Ok(Self { k, delta, capacity, family: Family::PermutationGeo })
    }
}

fn check_capacity(capacity: u32) -> Result<()> {
    if capacity == 0 {
        return Err(OfalError::NonPositiveCapacity { index: 0 });
    }
    Ok(())
}

/// `c − 1` requests on every server, in server order.
fn prefill(layout: &ServerLayout, capacity: u32) -> Vec<Rational> {
    layout
        .positions()
        .iter()
        .flat_map(|p| std::iter::repeat(p.clone()).take(capacity as usize - 1))
        .collect()
}

/// Servers `0, 2, 4, …, 2^(k−1)` and requests `2^(i−1) + δ`, after the pre-fill.
pub fn greedy_adversary(params: &AdversaryParams) -> Result<(Instance, RequestSequence)> {
    let k = params.k;
    if k < 2 {
        return Err(OfalError::InvalidParameter(format!("greedy adversary needs k ≥ 2, got {k}")));
    }
    check_capacity(params.capacity)?;
    let mut positions = vec![Rational::zero()];
    positions.extend((1..k).map(|i| pow(&int(2), i)));
    let layout = ServerLayout::new(positions)?;
    let mut requests = prefill(&layout, params.capacity);
    requests.extend((0..k).map(|i| pow(&int(2), i) + &params.delta));
    let inst = Instance::uniform(layout, params.capacity)?;
    Ok((inst, RequestSequence::new(requests)))
}

/// `(1−δ^i)/(1−δ)`, the distance of the `i`-th server on either side from 0.
fn geometric_offset(delta: &Rational, i: usize) -> Rational {
    (Rational::one() - pow(delta, i)) / (Rational::one() - delta)
}

/// `2k` servers at `±(1−δ^i)/(1−δ)` and `2k` requests alternating around the centre.
///
/// Request `2i−1` sits just left of the midpoint between `s_(k+i−1)` and
/// `s_(k+i)`; request `2i` just right of the midpoint between `s_(k−i)` and
/// `s_(k−i+1)`. The last one refers to `s_0`, which is placed where the layout
/// formula puts it: `−(1−δ^(k+1))/(1−δ)`.
pub fn permutation_adversary(params: &AdversaryParams) -> Result<(Instance, RequestSequence)> {
    let k = params.k;
    if k < 1 {
        return Err(OfalError::InvalidParameter("permutation adversary needs k ≥ 1".into()));
    }
    check_capacity(params.capacity)?;
    let delta = &params.delta;
    if !(delta > &Rational::zero() && delta < &Rational::one()) {
        return Err(OfalError::InvalidParameter(format!("δ must lie in (0,1), got {delta}")));
    }
    // pos(j) for j = 0..=2k, 1-based as in s_j.
    let pos = |j: usize| -> Rational {
        if j > k {
            geometric_offset(delta, j - k)
        } else {
            -geometric_offset(delta, k - j + 1)
        }
    };
    let layout = ServerLayout::new((1..=2 * k).map(pos).collect())?;
    let tail = pow(delta, k) / (Rational::one() - delta);
    let eps_j = |j: usize| &tail / pow(&int(2), 2 * k - j + 1);
    let half = rat(1, 2);
    let mut requests = prefill(&layout, params.capacity);
    for i in 1..=k {
        let odd = (pos(k + i - 1) + pos(k + i)) * &half;
        requests.push(odd - eps_j(2 * i - 1));
        let even = (pos(k - i) + pos(k - i + 1)) * &half;
        requests.push(even + eps_j(2 * i));
    }
    let inst = Instance::uniform(layout, params.capacity)?;
    Ok((inst, RequestSequence::new(requests)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform over the hull of the servers.
    Uniform,
    /// A random server plus noise of up to half a neighbouring gap.
    Mixture,
    /// Points between PTCP's choice and the optimal choice of a pilot sequence.
    OppositeBiased,
}

/// Resolution of sampled coordinates: every sample is `lo + (hi−lo)·u/GRAIN`.
const GRAIN: i64 = 1 << 12;

fn sample_between(rng: &mut impl Rng, lo: &Rational, hi: &Rational) -> Rational {
    let u = rng.gen_range(0..=GRAIN);
    lo + (hi - lo) * rat(u, GRAIN)
}

fn sample_uniform(rng: &mut impl Rng, layout: &ServerLayout) -> Rational {
    sample_between(rng, layout.first(), layout.last())
}

fn sample_mixture(rng: &mut impl Rng, layout: &ServerLayout) -> Rational {
    let k = layout.len();
    let j = rng.gen_range(0..k);
    let p = layout.position(j);
    if rng.gen_bool(0.3) || k == 1 {
        return p.clone();
    }
    let lo = if j > 0 { (layout.position(j - 1) + p) * rat(1, 2) } else { p.clone() };
    let hi = if j + 1 < k { (layout.position(j + 1) + p) * rat(1, 2) } else { p.clone() };
    sample_between(rng, &lo, &hi)
}

/// One random sequence of length `n`.
pub fn random_sequence(
    inst: &Instance,
    n: usize,
    dist: Distribution,
    rng: &mut impl Rng,
) -> Result<RequestSequence> {
    if n as u64 > inst.total_capacity() {
        return Err(OfalError::CapacityExceeded { requests: n, capacity: inst.total_capacity() });
    }
    let layout = inst.layout();
    Ok(match dist {
        Distribution::Uniform => (0..n).map(|_| sample_uniform(rng, layout)).collect(),
        Distribution::Mixture => (0..n).map(|_| sample_mixture(rng, layout)).collect(),
        Distribution::OppositeBiased => opposite_biased(&Ptcp::new(layout), inst, n, rng)?,
    })
}

/// Samples a pilot sequence, then redraws every request between the rule's
/// server and the optimal server of the pilot.
pub fn opposite_biased<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    n: usize,
    rng: &mut impl Rng,
) -> Result<RequestSequence> {
    let layout = inst.layout();
    let pilot: RequestSequence = (0..n).map(|_| sample_mixture(rng, layout)).collect();
    let online = simulate(rule, inst, &pilot)?;
    let opt = optimal_cost(inst, &pilot)?;
    Ok(online
        .assignment
        .iter()
        .zip(&opt.assignment)
        .map(|(&a, &o)| {
            let (x, y) = (layout.position(a), layout.position(o));
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            sample_between(rng, lo, hi)
        })
        .collect())
}

/// A random layout with up to `k_max` servers, capacities up to `cap_max` and a
/// sequence of up to `n_max` requests from a random family.
pub fn random_case(
    rng: &mut impl Rng,
    k_max: usize,
    cap_max: u32,
    n_max: usize,
) -> Result<(Instance, RequestSequence)> {
    let k = rng.gen_range(1..=k_max);
    let layout = random_layout(rng, k);
    let caps = (0..k).map(|_| rng.gen_range(1..=cap_max)).collect();
    let inst = Instance::new(layout, caps)?;
    let n = rng.gen_range(0..=n_max.min(inst.total_capacity() as usize));
    let family = match rng.gen_range(0..3) {
        0 => Distribution::Uniform,
        1 => Distribution::Mixture,
        _ => Distribution::OppositeBiased,
    };
    let seq = random_sequence(&inst, n, family, rng)?;
    Ok((inst, seq))
}

/// Endless seeded stream of random sequences.
pub struct RandomSequences<'a> {
    inst: &'a Instance,
    n: usize,
    dist: Distribution,
    rng: ChaCha8Rng,
}

impl Iterator for RandomSequences<'_> {
    type Item = Result<RequestSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(random_sequence(self.inst, self.n, self.dist, &mut self.rng))
    }
}

pub fn random_sequences(inst: &Instance, n: usize, seed: u64, dist: Distribution) -> RandomSequences<'_> {
    RandomSequences { inst, n, dist, rng: ChaCha8Rng::seed_from_u64(seed) }
}

/// Random layout of `k` servers with integer-over-small-denominator gaps, some
/// of them stretched by a power of two so that gap ratios vary widely.
pub fn random_layout(rng: &mut impl Rng, k: usize) -> ServerLayout {
    let mut x = int(rng.gen_range(-10..=10));
    let mut positions = Vec::with_capacity(k);
    for _ in 0..k {
        positions.push(x.clone());
        let mut gap = rat(rng.gen_range(1..=30), rng.gen_range(1..=4));
        if rng.gen_bool(0.25) {
            gap *= pow(&int(2), rng.gen_range(1..=6));
        }
        x += gap;
    }
    ServerLayout::new(positions).expect("increasing by construction")
}

/// Candidate request positions for exhaustive search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    #[serde(with = "crate::model::serde_coords")]
    pub points: Vec<Rational>,
}

impl GridSpec {
    pub fn new(mut points: Vec<Rational>) -> Self {
        points.sort();
        points.dedup();
        Self { points }
    }

    /// Servers, critical points and gap midpoints, each with `±ε` neighbours,
    /// where ε is a sixteenth of the smallest gap.
    pub fn full(layout: &ServerLayout) -> Self {
        let eps = Self::epsilon(layout);
        let mut anchors: Vec<Rational> = layout.positions().to_vec();
        anchors.extend(SplitTree::build(layout).critical_points());
        anchors.extend(layout.positions().windows(2).map(|w| (&w[0] + &w[1]) * rat(1, 2)));
        Self::with_neighbours(anchors, &eps)
    }

    /// Servers and critical points with `±ε` neighbours, without midpoints.
    pub fn reduced(layout: &ServerLayout) -> Self {
        let eps = Self::epsilon(layout);
        let mut anchors: Vec<Rational> = layout.positions().to_vec();
        anchors.extend(SplitTree::build(layout).critical_points());
        Self::with_neighbours(anchors, &eps)
    }

    fn epsilon(layout: &ServerLayout) -> Rational {
        layout
            .positions()
            .windows(2)
            .map(|w| &w[1] - &w[0])
            .min()
            .unwrap_or_else(Rational::one)
            / int(16)
    }

    fn with_neighbours(anchors: Vec<Rational>, eps: &Rational) -> Self {
        let points = anchors
            .iter()
            .flat_map(|a| [a - eps, a.clone(), a + eps])
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// All `|grid|^n` sequences in lexicographic index order.
pub struct GridSequences<'a> {
    grid: &'a GridSpec,
    index: Vec<usize>,
    done: bool,
}

pub fn grid_sequences<'a>(
    inst: &Instance,
    n: usize,
    grid: &'a GridSpec,
    budget: u128,
) -> Result<GridSequences<'a>> {
    if n as u64 > inst.total_capacity() {
        return Err(OfalError::CapacityExceeded { requests: n, capacity: inst.total_capacity() });
    }
    let size = (grid.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > budget {
        return Err(OfalError::GuardExceeded { what: "grid sequences", size, limit: budget });
    }
    Ok(GridSequences { grid, index: vec![0; n], done: grid.is_empty() && n > 0 })
}

impl Iterator for GridSequences<'_> {
    type Item = RequestSequence;

    fn next(&mut self) -> Option<RequestSequence> {
        if self.done {
            return None;
        }
        let seq = self.index.iter().map(|&u| self.grid.points[u].clone()).collect();
        // Odometer increment, last position fastest.
        self.done = true;
        for u in self.index.iter_mut().rev() {
            *u += 1;
            if *u < self.grid.len() {
                self.done = false;
                break;
            }
            *u = 0;
        }
        Some(seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::Greedy;
    use crate::permutation::permutation_run;

    #[test]
    fn greedy_layout_and_requests() {
        let p = AdversaryParams { k: 4, delta: rat(1, 100), capacity: 1, family: Family::GreedyExp };
        let (inst, seq) = greedy_adversary(&p).unwrap();
        let servers: Vec<Rational> = [0, 2, 4, 8].iter().map(|&v| int(v)).collect();
        assert_eq!(inst.layout().positions(), servers.as_slice());
        let reqs: Vec<Rational> = [101, 201, 401, 801].iter().map(|&v| rat(v, 100)).collect();
        assert_eq!(seq.requests, reqs);
    }

    #[test]
    fn greedy_pattern() {
        let p = AdversaryParams::greedy(5, &rat(1, 10), 1).unwrap();
        let (inst, seq) = greedy_adversary(&p).unwrap();
        let trace = simulate(&Greedy::new(inst.layout()), &inst, &seq).unwrap();
        assert_eq!(trace.assignment, vec![1, 2, 3, 4, 0]);
    }

    #[test]
    fn greedy_prefill_precedes_requests() {
        let p = AdversaryParams { k: 2, delta: rat(1, 10), capacity: 3, family: Family::GreedyExp };
        let (inst, seq) = greedy_adversary(&p).unwrap();
        assert_eq!(inst.capacities(), &[3, 3]);
        let expected: Vec<Rational> =
            vec![int(0), int(0), int(2), int(2), rat(11, 10), rat(21, 10)];
        assert_eq!(seq.requests, expected);
    }

    #[test]
    fn delta_choices() {
        let eps = rat(1, 10);
        let g = AdversaryParams::greedy(4, &eps, 1).unwrap();
        assert!(greedy_delta_ok(4, &g.delta, &eps));
        assert!(!greedy_delta_ok(4, &(&g.delta * int(10)), &eps));
        let p = AdversaryParams::permutation(3, &eps, 1).unwrap();
        assert!(permutation_delta_ok(3, &p.delta, &eps));
        assert!(!permutation_delta_ok(3, &(&p.delta * int(10)), &eps));
        assert_eq!(p.delta, rat(1, 1000));
    }

    #[test]
    fn permutation_layout() {
        let p = AdversaryParams { k: 2, delta: rat(1, 10), capacity: 1, family: Family::PermutationGeo };
        let (inst, seq) = permutation_adversary(&p).unwrap();
        let servers = vec![rat(-11, 10), int(-1), int(1), rat(11, 10)];
        assert_eq!(inst.layout().positions(), servers.as_slice());
        // ε_j = δ²/(1−δ)/2^(5−j) = (1/90)/2^(5−j).
        let tail = rat(1, 90);
        let expected = vec![
            int(0) - &tail / int(16),
            rat(-21, 20) + &tail / int(8),
            rat(21, 20) - &tail / int(4),
            // s_0 = −(1−δ³)/(1−δ) = −1.11.
            (rat(-111, 100) + rat(-11, 10)) / int(2) + &tail / int(2),
        ];
        assert_eq!(seq.requests, expected);
    }

    #[test]
    fn permutation_pattern() {
        for k in 1..=4 {
            let p = AdversaryParams::permutation(k, &rat(1, 10), 1).unwrap();
            let (inst, seq) = permutation_adversary(&p).unwrap();
            let run = permutation_run(&inst, &seq).unwrap();
            // r_(2i−1) → s_(k−i+1), r_(2i) → s_(k+i), as 0-based indices.
            let expected: Vec<usize> = (1..=k).flat_map(|i| [k - i, k + i - 1]).collect();
            assert_eq!(run.trace.assignment, expected, "k={k}");
        }
    }

    #[test]
    fn permutation_rejects_bad_delta() {
        let p = AdversaryParams { k: 2, delta: int(1), capacity: 1, family: Family::PermutationGeo };
        assert!(permutation_adversary(&p).is_err());
    }

    #[test]
    fn random_streams_are_seeded() {
        let inst = Instance::unit(ServerLayout::from_integers(&[0, 3, 4, 10]).unwrap());
        for dist in [Distribution::Uniform, Distribution::Mixture, Distribution::OppositeBiased] {
            let a: Vec<_> = random_sequences(&inst, 4, 7, dist).take(5).map(|s| s.unwrap()).collect();
            let b: Vec<_> = random_sequences(&inst, 4, 7, dist).take(5).map(|s| s.unwrap()).collect();
            assert_eq!(a, b);
            for s in &a {
                assert!(s.iter().all(|r| r >= &int(0) && r <= &int(10)));
            }
        }
        let empty = random_sequences(&inst, 0, 1, Distribution::Uniform).next().unwrap().unwrap();
        assert!(empty.is_empty());
        assert!(random_sequences(&inst, 5, 1, Distribution::Uniform).next().unwrap().is_err());
    }

    #[test]
    fn grid_enumeration() {
        let inst = Instance::unit(ServerLayout::from_integers(&[0, 1]).unwrap());
        let grid = GridSpec::new(vec![int(0), rat(1, 2), int(1)]);
        let all: Vec<_> = grid_sequences(&inst, 2, &grid, 100).unwrap().collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[1].requests, vec![int(0), rat(1, 2)]);
        assert!(grid_sequences(&inst, 2, &grid, 8).is_err());
        assert_eq!(grid_sequences(&inst, 0, &grid, 1).unwrap().count(), 1);
    }

    #[test]
    fn standard_grids() {
        let layout = ServerLayout::from_integers(&[0, 1]).unwrap();
        let full = GridSpec::full(&layout);
        // 0, 1/2, 1 with ±1/16 neighbours; the critical point is the midpoint.
        assert_eq!(full.len(), 9);
        assert!(full.points.contains(&rat(1, 2)));
        assert_eq!(GridSpec::reduced(&layout), full);
    }
}
