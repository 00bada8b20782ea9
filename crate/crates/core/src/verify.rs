//! Executable checks of the structural properties and competitive bounds.
//!
//! Every sweep derives the generator seed of trial `t` as `seed + t`, so any
//! reported violation can be replayed on its own from the stored seed.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{opposite_biased, random_case, random_layout, random_sequence, Distribution, GridSpec};
use crate::algorithms::{guard_rule, Ptcp, RuleKind};
use crate::alpha::alpha_fast;
use crate::engine::{simulate, surrounding_servers, EngineState, FreeSet, PriorityRule};
use crate::error::{OfalError, Result};
use crate::hybrid::{
    check_chain_monotone, check_shape, check_transition_rules, move_claim, run_hybrid, ChainCheck, MoveClaim,
};
use crate::model::{
    int, rat, AssignmentTrace, Instance, Rate, RatioReport, Rational, RequestSequence, ServerLayout,
};
use crate::numeric::Scaled;
use crate::opt::{dp_cost, noncrossing_dp_cost, optimal_cost, OptResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// A violation with everything needed to replay it.
#[derive(Clone, Debug, Serialize)]
pub struct Finding {
    pub detail: String,
    pub instance: Instance,
    pub sequence: RequestSequence,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub violations: Vec<Finding>,
    pub verdict: Verdict,
    /// Free-form measurements (worst rates, skipped cases, …).
    pub summary: BTreeMap<String, String>,
}

impl PropertyReport {
    pub fn new(property: impl Into<String>, trials: usize, violations: Vec<Finding>) -> Self {
        let verdict = if violations.is_empty() { Verdict::Pass } else { Verdict::Fail };
        Self { property: property.into(), trials, violations, verdict, summary: BTreeMap::new() }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.summary.insert(key.to_string(), value.to_string());
        self
    }
}

fn finding(detail: String, inst: &Instance, seq: &RequestSequence, seed: Option<u64>) -> Finding {
    Finding { detail, instance: inst.clone(), sequence: seq.clone(), seed }
}

fn free_before(trace: &AssignmentTrace, k: usize, t: usize) -> FreeSet {
    if t == 0 {
        FreeSet::all(k)
    } else {
        FreeSet::from_remaining(&trace.free_snapshots[t - 1])
    }
}

/// Steps at which the matched server was not a surrounding server.
pub fn surrounding_violations(trace: &AssignmentTrace, inst: &Instance, seq: &RequestSequence) -> Vec<usize> {
    (0..trace.len())
        .filter(|&t| {
            let free = free_before(trace, inst.len(), t);
            !surrounding_servers(&seq[t], free, inst.layout()).contains(trace.assignment[t])
        })
        .collect()
}

pub fn check_surrounding_oriented(trace: &AssignmentTrace, inst: &Instance, seq: &RequestSequence) -> PropertyReport {
    let violations = surrounding_violations(trace, inst, seq)
        .into_iter()
        .map(|t| finding(format!("step {t} matched to non-surrounding server {}", trace.assignment[t]), inst, seq, None))
        .collect();
    PropertyReport::new("surrounding-oriented", 1, violations)
}

/// A sequence closer than `seq` with respect to `trace`: each request is kept
/// or redrawn between itself and its matched server, at least one moves when
/// any can.
pub fn closer_sequence(
    trace: &AssignmentTrace,
    inst: &Instance,
    seq: &RequestSequence,
    rng: &mut impl Rng,
) -> RequestSequence {
    let mut out = seq.clone();
    let movable: Vec<usize> = (0..seq.len())
        .filter(|&t| &seq[t] != inst.position(trace.assignment[t]))
        .collect();
    if movable.is_empty() {
        return out;
    }
    let forced = movable[rng.gen_range(0..movable.len())];
    for &t in &movable {
        if t != forced && rng.gen_bool(0.5) {
            continue;
        }
        let s = inst.position(trace.assignment[t]);
        // Fraction of the way towards the server, in (0, 1].
        let u = rng.gen_range(1..=16);
        out.requests[t] = &seq[t] + (s - &seq[t]) * rat(u, 16);
    }
    out
}

/// Compares the assignment on `seq` with the assignments on `trials` random
/// closer sequences.
pub fn check_faithful<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    seq: &RequestSequence,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let base = simulate(rule, inst, seq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let tau = closer_sequence(&base, inst, seq, &mut rng);
        let moved = simulate(rule, inst, &tau)?;
        if moved.assignment != base.assignment {
            violations.push(finding(
                format!(
                    "closer sequence {:?} changes assignment {:?} to {:?}",
                    tau.requests.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                    base.assignment,
                    moved.assignment
                ),
                inst,
                seq,
                Some(seed),
            ));
        }
    }
    Ok(PropertyReport::new("faithful", trials, violations))
}

/// Steps whose request does not lie between the online and optimal servers.
pub fn non_opposite_steps(trace: &AssignmentTrace, opt: &OptResult, inst: &Instance, seq: &RequestSequence) -> Vec<usize> {
    (0..seq.len())
        .filter(|&t| {
            let a = inst.position(trace.assignment[t]);
            let o = inst.position(opt.assignment[t]);
            let (lo, hi) = if a <= o { (a, o) } else { (o, a) };
            !(lo <= &seq[t] && &seq[t] <= hi)
        })
        .collect()
}

pub fn is_opposite(trace: &AssignmentTrace, opt: &OptResult, inst: &Instance, seq: &RequestSequence) -> bool {
    non_opposite_steps(trace, opt, inst, seq).is_empty()
}

pub fn check_opposite(trace: &AssignmentTrace, opt: &OptResult, inst: &Instance, seq: &RequestSequence) -> PropertyReport {
    let violations = non_opposite_steps(trace, opt, inst, seq)
        .into_iter()
        .map(|t| finding(format!("step {t} is not between its two servers"), inst, seq, None))
        .collect();
    PropertyReport::new("opposite", 1, violations)
}

/// `2α(S) + 1` for the layout.
pub fn ratio_bound(layout: &ServerLayout) -> Rational {
    alpha_fast(layout).bound()
}

/// Rate of `rule` on `seq` against the `2α(S)+1` bound.
pub fn check_ratio_bound<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    seq: &RequestSequence,
) -> Result<RatioReport> {
    let trace = simulate(rule, inst, seq)?;
    let opt = noncrossing_dp_cost(inst, seq)?;
    Ok(ratio_report(String::new(), rule.id(), None, inst, trace.total_cost, opt))
}

pub fn ratio_report(
    instance_id: String,
    algorithm: &str,
    seed: Option<u64>,
    inst: &Instance,
    alg_cost: Rational,
    opt_cost: Rational,
) -> RatioReport {
    let rate = Rate::of(&alg_cost, &opt_cost);
    let bound = ratio_bound(inst.layout());
    let within_bound = rate.le(&bound);
    RatioReport { instance_id, algorithm: algorithm.to_string(), seed, alg_cost, opt_cost, rate, bound, within_bound }
}

fn trial_rng(seed: u64, trial: usize) -> (u64, ChaCha8Rng) {
    let s = seed.wrapping_add(trial as u64);
    (s, ChaCha8Rng::seed_from_u64(s))
}

/// Runs `body` for every trial in parallel and keeps the findings in trial order.
fn sweep<F>(trials: usize, seed: u64, body: F) -> Result<Vec<Finding>>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<Vec<Finding>> + Sync,
{
    let per_trial: Vec<Result<Vec<Finding>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (s, mut rng) = trial_rng(seed, t);
            body(s, &mut rng)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Size limits of randomly generated cases.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CaseLimits {
    pub k_max: usize,
    pub cap_max: u32,
    pub n_max: usize,
}

impl Default for CaseLimits {
    fn default() -> Self {
        Self { k_max: 10, cap_max: 5, n_max: 40 }
    }
}

/// Rate ≤ 2α(S)+1 on random (layout, capacities, sequence) triples.
pub fn ratio_sweep(kind: RuleKind, trials: usize, seed: u64, limits: CaseLimits) -> Result<PropertyReport> {
    let findings = sweep(trials, seed, |s, rng| {
        let (inst, seq) = random_case(rng, limits.k_max, limits.cap_max, limits.n_max)?;
        let rule = kind.build(inst.layout());
        let rep = check_ratio_bound(&rule, &inst, &seq)?;
        Ok(if rep.within_bound {
            vec![]
        } else {
            vec![finding(format!("rate {} exceeds {}", rep.rate, rep.bound), &inst, &seq, Some(s))]
        })
    })?;
    Ok(PropertyReport::new(format!("ratio-bound/{}", kind.name()), trials, findings))
}

pub fn surrounding_sweep(kind: RuleKind, trials: usize, seed: u64, limits: CaseLimits) -> Result<PropertyReport> {
    let findings = sweep(trials, seed, |s, rng| {
        let (inst, seq) = random_case(rng, limits.k_max, limits.cap_max, limits.n_max)?;
        let trace = simulate(&kind.build(inst.layout()), &inst, &seq)?;
        Ok(surrounding_violations(&trace, &inst, &seq)
            .into_iter()
            .map(|t| finding(format!("step {t} not surrounding"), &inst, &seq, Some(s)))
            .collect())
    })?;
    Ok(PropertyReport::new(format!("surrounding-oriented/{}", kind.name()), trials, findings))
}

/// Each trial draws a case and one closer sequence.
pub fn faithful_sweep(kind: RuleKind, trials: usize, seed: u64, limits: CaseLimits) -> Result<PropertyReport> {
    let findings = sweep(trials, seed, |s, rng| {
        let (inst, seq) = random_case(rng, limits.k_max, limits.cap_max, limits.n_max)?;
        let rule = kind.build(inst.layout());
        Ok(check_faithful(&rule, &inst, &seq, 1, rng.gen())?
            .violations
            .into_iter()
            .map(|mut f| {
                f.seed = Some(s);
                f
            })
            .collect())
    })?;
    Ok(PropertyReport::new(format!("faithful/{}", kind.name()), trials, findings))
}

/// `max{2α(S)+1, (2d−x)/x, (2Δ+d+x)/(d−x)}` with `Δ = s_k − s_1`.
pub fn adx_bound(layout: &ServerLayout, d: &Rational, x: &Rational) -> Rational {
    let spread = layout.last() - layout.first();
    let two = int(2);
    [
        ratio_bound(layout),
        (&two * d - x) / x,
        (&two * &spread + d + x) / (d - x),
    ]
    .into_iter()
    .max()
    .expect("three candidates")
}

/// Number of requests in `(s_k + x, s_(k+1)]`.
fn requests_near_extra(seq: &RequestSequence, threshold: &Rational, extra: &Rational) -> usize {
    seq.iter().filter(|r| *r > threshold && *r <= extra).count()
}

/// Guarded PTCP on `S ∪ {s_k + d}`: the cost bound on random sequences and the
/// structure of opposite unit-capacity sequences.
pub fn adx_sweep(layout: &ServerLayout, d: &Rational, x: &Rational, trials: usize, seed: u64) -> Result<PropertyReport> {
    let (rule, extended) = guard_rule(Ptcp::new(layout), layout, d, x)?;
    let bound = adx_bound(layout, d, x);
    let base_bound = ratio_bound(layout);
    let alpha = alpha_fast(layout).alpha;
    let threshold = rule.threshold().clone();
    let extra = extended.last().clone();
    let k1 = extended.len();
    let per_trial: Vec<Result<(Vec<Finding>, bool)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (s, mut rng) = trial_rng(seed, t);
            let unit = rng.gen_bool(0.5);
            let caps: Vec<u32> = (0..k1).map(|_| if unit { 1 } else { rng.gen_range(1..=3) }).collect();
            let inst = Instance::new(extended.clone(), caps)?;
            let n = rng.gen_range(1..=inst.total_capacity() as usize);
            let seq = match rng.gen_range(0..3) {
                0 => random_sequence(&inst, n, Distribution::Uniform, &mut rng)?,
                1 => random_sequence(&inst, n, Distribution::Mixture, &mut rng)?,
                _ => opposite_biased(&rule, &inst, n, &mut rng)?,
            };
            let trace = simulate(&rule, &inst, &seq)?;
            let opt = optimal_cost(&inst, &seq)?;
            let rate = Rate::of(&trace.total_cost, &opt.cost);
            let mut out = Vec::new();
            if !rate.le(&bound) {
                out.push(finding(format!("rate {rate} exceeds {bound}"), &inst, &seq, Some(s)));
            }
            let opposite = unit && is_opposite(&trace, &opt, &inst, &seq);
            if opposite {
                let m = requests_near_extra(&seq, &threshold, &extra);
                if m > 2 {
                    out.push(finding(format!("opposite sequence with {m} requests beyond the guard"), &inst, &seq, Some(s)));
                }
                // The single-request case and the move claim are stated for
                // sequences that fill every server.
                if n == k1 {
                    if m == 1 && !rate.le(&base_bound) {
                        out.push(finding(
                            format!("single request beyond the guard but rate {rate} exceeds {base_bound}"),
                            &inst,
                            &seq,
                            Some(s),
                        ));
                    }
                    if let MoveClaim::Checked(drop, allowed) = move_claim(&rule, &inst, &seq, &alpha)? {
                        if drop > allowed {
                            out.push(finding(
                                format!("moving the rightmost request saves {drop}, more than {allowed}"),
                                &inst,
                                &seq,
                                Some(s),
                            ));
                        }
                    }
                }
            }
            Ok((out, opposite))
        })
        .collect();
    let mut findings = Vec::new();
    let mut opposite = 0usize;
    for r in per_trial {
        let (f, o) = r?;
        findings.extend(f);
        opposite += usize::from(o);
    }
    Ok(PropertyReport::new("adx-bound", trials, findings)
        .note("bound", &bound)
        .note("d", d)
        .note("x", x)
        .note("opposite_unit_sequences", opposite))
}

/// Hybrid invariants of `kind` on random unit-capacity layouts with up to
/// `k_max` servers.
pub fn hybrid_sweep(kind: RuleKind, trials: usize, seed: u64, k_max: usize) -> Result<PropertyReport> {
    let per_trial: Vec<Result<(Vec<Finding>, bool)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (s, mut rng) = trial_rng(seed, t);
            let k = rng.gen_range(2..=k_max);
            let inst = Instance::unit(random_layout(&mut rng, k));
            let n = rng.gen_range(1..=k);
            let family = if rng.gen_bool(0.5) { Distribution::Uniform } else { Distribution::Mixture };
            let seq = random_sequence(&inst, n, family, &mut rng)?;
            let rule = kind.build(inst.layout());
            let base = simulate(&rule, &inst, &seq)?;
            // A deviation needs a second free server at step i.
            let steps: Vec<usize> = (0..n).filter(|&t| free_before(&base, k, t).len() >= 2).collect();
            let i = steps[rng.gen_range(0..steps.len())];
            let free = free_before(&base, k, i).minus(FreeSet::single(base.assignment[i]));
            let choices: Vec<usize> = free.iter().collect();
            let s_dev = choices[rng.gen_range(0..choices.len())];
            let ht = run_hybrid(&rule, &inst, &seq, i, s_dev)?;
            let mut out: Vec<Finding> = check_shape(&ht)
                .into_iter()
                .chain(check_transition_rules(&ht))
                .map(|v| finding(format!("{} at step {}: {}", v.property, v.step, v.detail), &inst, &seq, Some(s)))
                .collect();
            let in_pre = match check_chain_monotone(&ht, &inst) {
                ChainCheck::OutOfPrecondition => false,
                ChainCheck::Checked(vs) => {
                    out.extend(vs.into_iter().map(|v| {
                        finding(format!("{} at step {}: {}", v.property, v.step, v.detail), &inst, &seq, Some(s))
                    }));
                    true
                }
            };
            Ok((out, in_pre))
        })
        .collect();
    let mut findings = Vec::new();
    let mut in_pre = 0usize;
    for r in per_trial {
        let (f, p) = r?;
        findings.extend(f);
        in_pre += usize::from(p);
    }
    Ok(PropertyReport::new(format!("hybrid/{}", kind.name()), trials, findings)
        .note("monotone_checked", in_pre)
        .note("out_of_precondition", trials - in_pre))
}

/// Largest rate found by exhaustive search.
#[derive(Clone, Debug, Serialize)]
pub struct WorstRate {
    pub rate: Rate,
    #[serde(with = "crate::model::serde_coord")]
    pub alg_cost: Rational,
    #[serde(with = "crate::model::serde_coord")]
    pub opt_cost: Rational,
    pub sequence: RequestSequence,
    pub explored: u64,
}

/// Best `(alg, opt)` pair in scaled integers, compared as a rate.
#[derive(Clone, Debug)]
struct Best {
    alg: i128,
    opt: i128,
    seq: Vec<u8>,
}

impl Best {
    fn beats(&self, other: &Best) -> bool {
        rate_cmp((self.alg, self.opt), (other.alg, other.opt)) == std::cmp::Ordering::Greater
    }
}

fn rate_cmp(a: (i128, i128), b: (i128, i128)) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    // Normalise 0/0 to 1/1; x/0 with x > 0 is infinite.
    let norm = |(x, y): (i128, i128)| if x == 0 && y == 0 { (1, 1) } else { (x, y) };
    let (a, b) = (norm(a), norm(b));
    match (a.1 == 0, b.1 == 0) {
        (true, true) => Equal,
        (true, false) => Greater,
        (false, true) => Less,
        (false, false) => (a.0 * b.1).cmp(&(b.0 * a.1)),
    }
}

struct Search<'a, R: ?Sized> {
    rule: &'a R,
    servers: Vec<i128>,
    caps: Vec<u32>,
    points: Vec<i128>,
    points_exact: &'a [Rational],
    n_max: usize,
}

struct Worker {
    memo: HashMap<u128, i128>,
    best: Option<Best>,
    explored: u64,
    prefix: Vec<u8>,
    counts: Vec<u8>,
    key: u128,
}

impl<R: PriorityRule + ?Sized> Search<'_, R> {
    fn opt(&self, w: &mut Worker) -> i128 {
        if let Some(&v) = w.memo.get(&w.key) {
            return v;
        }
        let sorted: Vec<i128> = w
            .counts
            .iter()
            .enumerate()
            .flat_map(|(g, &c)| std::iter::repeat(self.points[g]).take(c as usize))
            .collect();
        let v = dp_cost(&self.servers, &self.caps, &sorted).expect("within capacity");
        w.memo.insert(w.key, v);
        v
    }

    fn dfs(&self, w: &mut Worker, state: &mut EngineState, alg: i128) {
        w.explored += 1;
        let opt = self.opt(w);
        let cand = Best { alg, opt, seq: Vec::new() };
        if w.best.as_ref().map_or(true, |b| cand.beats(b)) {
            w.best = Some(Best { seq: w.prefix.clone(), ..cand });
        }
        if w.prefix.len() == self.n_max || state.free().is_empty() {
            return;
        }
        for g in 0..self.points.len() {
            self.descend(w, state, alg, g);
        }
    }

    fn descend(&self, w: &mut Worker, state: &mut EngineState, alg: i128, g: usize) {
        let j = self.rule.decide(&self.points_exact[g], state.free());
        state.take(j);
        w.prefix.push(g as u8);
        w.counts[g] += 1;
        w.key += 1u128 << (4 * g);
        self.dfs(w, state, alg + (self.points[g] - self.servers[j]).abs());
        w.key -= 1u128 << (4 * g);
        w.counts[g] -= 1;
        w.prefix.pop();
        state.give_back(j);
    }
}

/// Maximum grid points per search; the multiset key packs 4 bits per point.
pub const MAX_GRID_POINTS: usize = 32;

/// Exhaustive worst rate of `rule` over all non-empty sequences of at most
/// `n_max` grid points.
pub fn grid_worst_rate<R: PriorityRule + ?Sized>(
    rule: &R,
    inst: &Instance,
    grid: &GridSpec,
    n_max: usize,
    budget: u128,
) -> Result<WorstRate> {
    let n_max = n_max.min(inst.total_capacity() as usize);
    if grid.is_empty() || n_max == 0 {
        return Err(OfalError::InvalidParameter("empty search space".into()));
    }
    if grid.len() > MAX_GRID_POINTS || n_max > 15 {
        return Err(OfalError::GuardExceeded { what: "grid points", size: grid.len() as u128, limit: MAX_GRID_POINTS as u128 });
    }
    let size: u128 = (1..=n_max as u32).map(|n| (grid.len() as u128).saturating_pow(n)).sum();
    if size > budget {
        return Err(OfalError::GuardExceeded { what: "grid search", size, limit: budget });
    }
    let k = inst.len();
    let scaled = Scaled::new(inst.layout().positions().iter().chain(&grid.points));
    let values = scaled
        .small(2 * n_max)
        .ok_or_else(|| OfalError::InvalidParameter("coordinates too large for grid search".into()))?;
    let search = Search {
        rule,
        servers: values[..k].to_vec(),
        caps: inst.capacities().to_vec(),
        points: values[k..].to_vec(),
        points_exact: &grid.points,
        n_max,
    };
    let fresh = || Worker {
        memo: HashMap::new(),
        best: None,
        explored: 0,
        prefix: Vec::with_capacity(n_max),
        counts: vec![0; grid.len()],
        key: 0,
    };
    let results: Vec<(Option<Best>, u64)> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let mut w = fresh();
            let mut state = EngineState::new(inst);
            search.descend(&mut w, &mut state, 0, g);
            (w.best, w.explored)
        })
        .collect();
    let mut best: Option<Best> = None;
    let mut explored = 0;
    for (b, e) in results {
        explored += e;
        if let Some(b) = b {
            if best.as_ref().map_or(true, |cur| b.beats(cur)) {
                best = Some(b);
            }
        }
    }
    let best = best.expect("at least one sequence");
    let alg_cost = scaled.unscale_i128(best.alg);
    let opt_cost = scaled.unscale_i128(best.opt);
    Ok(WorstRate {
        rate: Rate::of(&alg_cost, &opt_cost),
        alg_cost,
        opt_cost,
        sequence: best.seq.iter().map(|&g| grid.points[g as usize].clone()).collect(),
        explored,
    })
}

/// Worst grid rate with the given capacities never exceeds the worst grid rate
/// with unit capacities, both searched over the same grid and length limit.
pub fn capacity_insensitivity_probe<R: PriorityRule + ?Sized>(
    rule: &R,
    layout: &ServerLayout,
    capacity_profiles: &[Vec<u32>],
    grid: &GridSpec,
    n_max: usize,
    budget: u128,
) -> Result<PropertyReport> {
    let unit = Instance::unit(layout.clone());
    let base = grid_worst_rate(rule, &unit, grid, n_max, budget)?;
    let mut violations = Vec::new();
    let mut summary = vec![("unit".to_string(), base.rate.to_string())];
    for caps in capacity_profiles {
        let inst = Instance::new(layout.clone(), caps.clone())?;
        let worst = grid_worst_rate(rule, &inst, grid, n_max, budget)?;
        summary.push((format!("{caps:?}"), worst.rate.to_string()));
        if worst.rate > base.rate {
            violations.push(finding(
                format!("capacities {caps:?} reach rate {} above unit worst {}", worst.rate, base.rate),
                &inst,
                &worst.sequence,
                None,
            ));
        }
    }
    let mut rep = PropertyReport::new(format!("capacity-insensitivity/{}", rule.id()), capacity_profiles.len(), violations);
    for (key, value) in summary {
        rep = rep.note(&format!("worst_rate {key}"), value);
    }
    Ok(rep)
}
