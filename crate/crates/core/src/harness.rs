//! Batch experiments: ratio tables over instance suites, persisted as CSV rows
//! plus a JSON summary that carries full reproducers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    greedy_adversary, permutation_adversary, random_case, AdversaryParams, Distribution, GridSpec,
};
use crate::algorithms::{Greedy, Ptcp};
use crate::alpha::alpha_fast;
use crate::engine::simulate;
use crate::error::{OfalError, Result};
use crate::model::{
    format_coord, int, load_instance, load_sequence, parse_coord, rat, to_decimal, AssignmentTrace, Instance,
    Rate, Rational, RequestSequence,
};
use crate::opt::optimal_cost;
use crate::permutation::permutation_run;
use crate::verify::grid_worst_rate;

/// Online algorithms the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmId {
    Ptcp,
    Greedy,
    Permutation,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 3] = [AlgorithmId::Ptcp, AlgorithmId::Greedy, AlgorithmId::Permutation];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Ptcp => "ptcp",
            AlgorithmId::Greedy => "greedy",
            AlgorithmId::Permutation => "permutation",
        }
    }

    pub fn run(self, inst: &Instance, seq: &RequestSequence) -> Result<AssignmentTrace> {
        match self {
            AlgorithmId::Ptcp => simulate(&Ptcp::new(inst.layout()), inst, seq),
            AlgorithmId::Greedy => simulate(&Greedy::new(inst.layout()), inst, seq),
            AlgorithmId::Permutation => Ok(permutation_run(inst, seq)?.trace),
        }
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = OfalError;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| OfalError::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryKind {
    Greedy,
    Permutation,
}

/// Where instances and sequences come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    /// One instance file and one sequence file.
    File { instance: PathBuf, sequence: PathBuf },
    /// One adversarial instance per k in `k_min..=k_max`.
    Adversary {
        family: AdversaryKind,
        k_min: usize,
        k_max: usize,
        /// Exact rational such as `"1/10"`.
        epsilon: String,
        #[serde(default = "one")]
        capacity: u32,
    },
    /// `trials` random (layout, capacities, sequence) triples.
    Random { k_max: usize, cap_max: u32, n_max: usize },
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithms: Vec<AlgorithmId>,
    pub source: InstanceSource,
    /// Only used by random sources.
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub json_path: Option<PathBuf>,
    /// Abort when PTCP exceeds `2α+1`.
    #[serde(default = "yes")]
    pub assert_bound: bool,
    /// Store instance, sequence and assignments of every case in the JSON summary.
    #[serde(default = "yes")]
    pub persist_cases: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(OfalError::InvalidParameter("no algorithms selected".into()));
        }
        match &self.source {
            InstanceSource::Adversary { k_min, k_max, .. } if k_min > k_max || *k_min == 0 => {
                Err(OfalError::InvalidParameter(format!("bad k range {k_min}..={k_max}")))
            }
            InstanceSource::Random { k_max, cap_max, .. } if *k_max == 0 || *cap_max == 0 => {
                Err(OfalError::InvalidParameter("random source needs k_max and cap_max ≥ 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub instance_id: String,
    pub algorithm: String,
    pub n: usize,
    pub alg_cost: String,
    pub opt_cost: String,
    pub rate: String,
    pub rate_decimal: String,
    pub bound: String,
    pub verdict: String,
}

pub const WITHIN_BOUND: &str = "within-bound";
pub const EXCEEDS_BOUND: &str = "exceeds-bound";

/// A case with everything needed to recompute its rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseRecord {
    pub instance_id: String,
    pub seed: Option<u64>,
    pub instance: Instance,
    pub sequence: RequestSequence,
    pub opt_assignment: Vec<usize>,
    pub assignments: BTreeMap<String, Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub cases: usize,
    pub max_rate: BTreeMap<String, Rate>,
    /// PTCP cases above `2α+1`.
    pub violations: Vec<CaseRecord>,
    #[serde(default)]
    pub records: Vec<CaseRecord>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.summary.violations.is_empty()
    }

    pub fn csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| OfalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ExperimentRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(OfalError::from)).collect()
}

struct Case {
    id: String,
    seed: Option<u64>,
    inst: Instance,
    seq: RequestSequence,
}

fn build_cases(config: &ExperimentConfig) -> Result<Vec<Case>> {
    match &config.source {
        InstanceSource::File { instance, sequence } => Ok(vec![Case {
            id: instance.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned()),
            seed: None,
            inst: load_instance(instance)?,
            seq: load_sequence(sequence)?,
        }]),
        InstanceSource::Adversary { family, k_min, k_max, epsilon, capacity } => {
            let eps = parse_coord(epsilon)?;
            (*k_min..=*k_max)
                .map(|k| {
                    let (name, built) = match family {
                        AdversaryKind::Greedy => {
                            ("greedy", AdversaryParams::greedy(k, &eps, *capacity).and_then(|p| greedy_adversary(&p)))
                        }
                        AdversaryKind::Permutation => (
                            "permutation",
                            AdversaryParams::permutation(k, &eps, *capacity).and_then(|p| permutation_adversary(&p)),
                        ),
                    };
                    let (inst, seq) = built?;
                    Ok(Case { id: format!("{name}-k{k}"), seed: None, inst, seq })
                })
                .collect()
        }
        InstanceSource::Random { k_max, cap_max, n_max } => (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = config.seed.wrapping_add(t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (inst, seq) = random_case(&mut rng, *k_max, *cap_max, *n_max)?;
                Ok(Case { id: format!("random-{t}"), seed: Some(seed), inst, seq })
            })
            .collect(),
    }
}

fn verdict(rate: &Rate, bound: &Rational) -> &'static str {
    if rate.le(bound) {
        WITHIN_BOUND
    } else {
        EXCEEDS_BOUND
    }
}

fn row(id: &str, algorithm: &str, n: usize, alg: &Rational, opt: &Rational, bound: &Rational) -> ExperimentRow {
    let rate = Rate::of(alg, opt);
    let rate_decimal = match rate.finite() {
        Some(q) => to_decimal(q, 12),
        None => "inf".into(),
    };
    ExperimentRow {
        instance_id: id.to_string(),
        algorithm: algorithm.to_string(),
        n,
        alg_cost: format_coord(alg),
        opt_cost: format_coord(opt),
        rate: rate.to_string(),
        rate_decimal,
        bound: format_coord(bound),
        verdict: verdict(&rate, bound).to_string(),
    }
}

/// Runs every algorithm on every case. Output order follows the case order and
/// then the configured algorithm order, whatever the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let cases = build_cases(config)?;
    let evaluated: Vec<(Vec<ExperimentRow>, CaseRecord, bool)> = cases
        .into_par_iter()
        .map(|case| -> Result<_> {
            let opt = optimal_cost(&case.inst, &case.seq)?;
            let bound = alpha_fast(case.inst.layout()).bound();
            let mut rows = Vec::new();
            let mut assignments = BTreeMap::new();
            let mut violated = false;
            for &alg in &config.algorithms {
                let trace = alg.run(&case.inst, &case.seq)?;
                let r = row(&case.id, alg.name(), case.seq.len(), &trace.total_cost, &opt.cost, &bound);
                violated |= alg == AlgorithmId::Ptcp && r.verdict == EXCEEDS_BOUND;
                rows.push(r);
                assignments.insert(alg.name().to_string(), trace.assignment);
            }
            let record = CaseRecord {
                instance_id: case.id,
                seed: case.seed,
                instance: case.inst,
                sequence: case.seq,
                opt_assignment: opt.assignment,
                assignments,
            };
            Ok((rows, record, violated))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut max_rate: BTreeMap<String, Rate> = BTreeMap::new();
    for (case_rows, record, violated) in evaluated {
        for r in &case_rows {
            let rate: Rate = serde_json::from_value(serde_json::Value::String(r.rate.clone()))?;
            let slot = max_rate.entry(r.algorithm.clone()).or_insert(Rate::Finite(int(0)));
            if rate > *slot {
                *slot = rate;
            }
        }
        rows.extend(case_rows);
        if violated {
            if config.assert_bound {
                return Err(OfalError::InvalidParameter(format!(
                    "PTCP exceeds 2α+1 on {}; reproducer: {}",
                    record.instance_id,
                    serde_json::to_string(&record)?
                )));
            }
            violations.push(record.clone());
        }
        if config.persist_cases {
            records.push(record);
        }
    }
    let summary = ExperimentSummary {
        name: config.name.clone(),
        seed: config.seed,
        cases: records.len().max(rows.len() / config.algorithms.len()),
        max_rate,
        violations,
        records,
    };
    let report = ExperimentReport { rows, summary };
    if let Some(path) = &config.csv_path {
        std::fs::write(path, report.csv()?)?;
    }
    if let Some(path) = &config.json_path {
        std::fs::write(path, report.json()?)?;
    }
    Ok(report)
}

/// Recomputes the rows of a persisted case.
pub fn replay_case(record: &CaseRecord) -> Result<Vec<ExperimentRow>> {
    let opt = AssignmentTrace::from_assignment("opt", &record.instance, &record.sequence, record.opt_assignment.clone())?;
    let bound = alpha_fast(record.instance.layout()).bound();
    record
        .assignments
        .iter()
        .map(|(name, assignment)| {
            let trace = AssignmentTrace::from_assignment(name.as_str(), &record.instance, &record.sequence, assignment.clone())?;
            Ok(row(&record.instance_id, name, record.sequence.len(), &trace.total_cost, &opt.total_cost, &bound))
        })
        .collect()
}

/// The three headline comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadlineTable {
    #[serde(rename = "thm46", alias = "greedy-exponential")]
    GreedyExponential,
    #[serde(rename = "thm47", alias = "permutation-geometric")]
    PermutationGeometric,
    #[serde(rename = "tightness-k2")]
    TightnessK2,
}

impl std::str::FromStr for HeadlineTable {
    type Err = OfalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm46" | "greedy-exponential" => Ok(HeadlineTable::GreedyExponential),
            "thm47" | "permutation-geometric" => Ok(HeadlineTable::PermutationGeometric),
            "tightness-k2" => Ok(HeadlineTable::TightnessK2),
            _ => Err(OfalError::InvalidParameter(format!("unknown table {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub k: usize,
    pub algorithm: String,
    pub rate: Rate,
    /// Human-readable target, e.g. `">= 63 - 1/10"`.
    pub target: String,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub title: String,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.title);
        let _ = writeln!(out, "{:>3}  {:<12} {:>16}  {:<18} {}", "k", "algorithm", "rate", "target", "ok");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>3}  {:<12} {:>16}  {:<18} {}",
                r.k,
                r.algorithm,
                r.rate.decimal(),
                r.target,
                if r.ok { "yes" } else { "NO" }
            );
        }
        out
    }
}

fn table_row(k: usize, algorithm: &str, rate: Rate, at_least: Option<&Rational>, at_most: Option<&Rational>) -> TableRow {
    let mut target = Vec::new();
    let mut ok = true;
    if let Some(lo) = at_least {
        target.push(format!(">= {}", format_coord(lo)));
        ok &= rate.ge(lo);
    }
    if let Some(hi) = at_most {
        target.push(format!("<= {}", format_coord(hi)));
        ok &= rate.le(hi);
    }
    TableRow { k, algorithm: algorithm.into(), rate, target: target.join(", "), ok }
}

/// Rebuilds one of the headline comparisons with `ε = 1/10`.
pub fn reproduce(table: HeadlineTable) -> Result<Table> {
    let eps = rat(1, 10);
    let mut rows = Vec::new();
    let title = match table {
        HeadlineTable::GreedyExponential => {
            for k in 2..=8 {
                let (inst, seq) = greedy_adversary(&AdversaryParams::greedy(k, &eps, 1)?)?;
                let opt = optimal_cost(&inst, &seq)?.cost;
                let g = AlgorithmId::Greedy.run(&inst, &seq)?.total_cost;
                let p = AlgorithmId::Ptcp.run(&inst, &seq)?.total_cost;
                let target = int((1 << k) - 1) - &eps;
                rows.push(table_row(k, "greedy", Rate::of(&g, &opt), Some(&target), None));
                rows.push(table_row(k, "ptcp", Rate::of(&p, &opt), None, Some(&int(5))));
            }
            "greedy vs PTCP on the exponential layout (eps = 1/10)"
        }
        HeadlineTable::PermutationGeometric => {
            for k in 1..=5 {
                let (inst, seq) = permutation_adversary(&AdversaryParams::permutation(k, &eps, 1)?)?;
                let opt = optimal_cost(&inst, &seq)?.cost;
                let q = AlgorithmId::Permutation.run(&inst, &seq)?.total_cost;
                let p = AlgorithmId::Ptcp.run(&inst, &seq)?.total_cost;
                let target = int(4 * k as i64 - 1) - &eps;
                rows.push(table_row(k, "permutation", Rate::of(&q, &opt), Some(&target), None));
                rows.push(table_row(k, "ptcp", Rate::of(&p, &opt), None, Some(&(int(3) + &eps))));
            }
            "permutation vs PTCP on the geometric layout (eps = 1/10)"
        }
        HeadlineTable::TightnessK2 => {
            let inst = Instance::unit(crate::model::ServerLayout::from_integers(&[0, 1])?);
            let grid = GridSpec::full(inst.layout());
            let worst = grid_worst_rate(&Ptcp::new(inst.layout()), &inst, &grid, 6, u128::MAX)?;
            rows.push(table_row(2, "ptcp", worst.rate, Some(&(int(3) - rat(1, 100))), Some(&int(3))));
            "PTCP worst rate on S = {0, 1} by grid search"
        }
    };
    Ok(Table { title: title.into(), rows })
}

/// Random sampling family accepted on the command line.
pub fn parse_distribution(s: &str) -> Result<Distribution> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| OfalError::InvalidParameter(format!("unknown distribution {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adversary_config(family: AdversaryKind, k_min: usize, k_max: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            algorithms: AlgorithmId::ALL.to_vec(),
            source: InstanceSource::Adversary { family, k_min, k_max, epsilon: "1/10".into(), capacity: 1 },
            trials: 0,
            seed: 0,
            csv_path: None,
            json_path: None,
            assert_bound: true,
            persist_cases: true,
        }
    }

    #[test]
    fn greedy_suite_rows_reach_target() {
        let report = run_experiment(&adversary_config(AdversaryKind::Greedy, 2, 8)).unwrap();
        assert_eq!(report.rows.len(), 7 * 3);
        for r in report.rows.iter().filter(|r| r.algorithm == "greedy") {
            let k: u32 = r.instance_id.trim_start_matches("greedy-k").parse().unwrap();
            let rate = parse_coord(&r.rate).unwrap();
            assert!(rate >= int((1 << k) - 1) - rat(1, 10), "{r:?}");
        }
        assert!(report.rows.iter().filter(|r| r.algorithm == "ptcp").all(|r| r.verdict == WITHIN_BOUND));
    }

    #[test]
    fn permutation_suite_rows_reach_target() {
        let report = run_experiment(&adversary_config(AdversaryKind::Permutation, 1, 5)).unwrap();
        for r in report.rows.iter().filter(|r| r.algorithm == "permutation") {
            let k: i64 = r.instance_id.trim_start_matches("permutation-k").parse().unwrap();
            assert!(parse_coord(&r.rate).unwrap() >= int(4 * k - 1) - rat(1, 10), "{r:?}");
        }
        assert!(report.passed());
    }

    #[test]
    fn random_runs_are_byte_identical() {
        let mut c = adversary_config(AdversaryKind::Greedy, 1, 1);
        c.source = InstanceSource::Random { k_max: 5, cap_max: 3, n_max: 12 };
        c.trials = 40;
        c.seed = 7;
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.csv().unwrap(), b.csv().unwrap());
        assert_eq!(rows_from_csv(&a.csv().unwrap()).unwrap(), a.rows);
    }

    #[test]
    fn persisted_cases_replay_to_the_same_rows() {
        let mut c = adversary_config(AdversaryKind::Greedy, 1, 1);
        c.source = InstanceSource::Random { k_max: 4, cap_max: 2, n_max: 8 };
        c.trials = 10;
        let report = run_experiment(&c).unwrap();
        for record in &report.summary.records {
            let mut replayed = replay_case(record).unwrap();
            let mut stored: Vec<_> = report.rows.iter().filter(|r| r.instance_id == record.instance_id).cloned().collect();
            replayed.sort_by(|a, b| a.algorithm.cmp(&b.algorithm));
            stored.sort_by(|a, b| a.algorithm.cmp(&b.algorithm));
            assert_eq!(replayed, stored);
        }
    }

    #[test]
    fn rate_columns_are_exact_and_decimal() {
        let r = row("x", "ptcp", 1, &int(2), &int(3), &int(3));
        assert_eq!(r.rate, "2/3");
        assert_eq!(r.rate_decimal, "0.666666666667");
        let inf = row("x", "ptcp", 1, &int(2), &int(0), &int(3));
        assert_eq!((inf.rate.as_str(), inf.verdict.as_str()), ("inf", EXCEEDS_BOUND));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = adversary_config(AdversaryKind::Permutation, 1, 3);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn reproduce_headline_tables() {
        let t = reproduce(HeadlineTable::GreedyExponential).unwrap();
        assert!(t.passed(), "{}", t.render());
        let t = reproduce(HeadlineTable::PermutationGeometric).unwrap();
        let k3 = t.rows.iter().find(|r| r.k == 3 && r.algorithm == "permutation").unwrap();
        assert!(k3.rate.ge(&rat(109, 10)));
        assert!(t.passed(), "{}", t.render());
    }

    #[test]
    fn distribution_names_parse() {
        assert_eq!(parse_distribution("opposite-biased").unwrap(), Distribution::OppositeBiased);
        assert!(parse_distribution("nope").is_err());
    }
}
