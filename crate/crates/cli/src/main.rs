use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ofal_core::adversary::{greedy_adversary, permutation_adversary, AdversaryParams, GridSpec};
use ofal_core::algorithms::{RuleKind, SplitTree};
use ofal_core::alpha::{alpha_bruteforce, alpha_fast};
use ofal_core::harness::{reproduce, rows_to_csv, run_experiment, AlgorithmId, ExperimentConfig, HeadlineTable};
use ofal_core::model::{
    format_coord, load_instance, load_sequence, parse_coord, to_decimal, Instance, RequestSequence,
    ServerLayout,
};
use ofal_core::opt::{noncrossing_dp_cost, optimal_bruteforce, optimal_cost};
use ofal_core::verify::{
    adx_sweep, capacity_insensitivity_probe, faithful_sweep, grid_worst_rate, hybrid_sweep, ratio_bound,
    ratio_sweep, surrounding_sweep, CaseLimits, Finding, PropertyReport,
};

#[derive(Parser)]
#[command(name = "ofal", version, about = "Online facility assignment on a line with capacities")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Span-to-gap metric α(S) and the bound 2α(S)+1.
    Alpha {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Also run the exhaustive subset enumeration.
        #[arg(long)]
        bruteforce: bool,
    },
    /// PTCP split tree with its critical points.
    Tree {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Run an online algorithm and print its assignment.
    Simulate {
        #[arg(long, value_parser = parse_algorithm)]
        alg: AlgorithmId,
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        sequence: SequenceArgs,
    },
    /// Offline optimum.
    Opt {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        sequence: SequenceArgs,
        #[arg(long, value_enum, default_value_t = OptMethod::Flow)]
        method: OptMethod,
    },
    /// Adversarial instance and sequence.
    Adversary {
        #[arg(value_enum)]
        family: Family,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "1/10")]
        epsilon: String,
        #[arg(long, default_value_t = 1)]
        capacity: u32,
    },
    /// Property checks; exit status 1 on any violation.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
    /// Batch experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the CSV path of the config.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Overrides the JSON path of the config.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// One of the headline comparison tables.
    Reproduce {
        #[arg(value_parser = parse_table)]
        table: HeadlineTable,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OptMethod {
    Flow,
    Dp,
    Bruteforce,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Greedy,
    Permutation,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON file with `servers` and `capacities`.
    #[arg(long, conflicts_with = "servers")]
    instance: Option<PathBuf>,
    /// Comma-separated server positions, e.g. `0,1,7/2`.
    #[arg(long)]
    servers: Option<String>,
    /// Comma-separated capacities (default 1 each).
    #[arg(long, requires = "servers")]
    capacities: Option<String>,
}

#[derive(Args)]
struct SequenceArgs {
    /// Request sequence JSON file.
    #[arg(long, conflicts_with = "requests")]
    sequence: Option<PathBuf>,
    /// Comma-separated request positions.
    #[arg(long)]
    requests: Option<String>,
}

#[derive(Args, Clone, Copy)]
struct SweepArgs {
    #[arg(long, value_parser = parse_rule, default_value = "ptcp")]
    alg: RuleKind,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 5)]
    cap_max: u32,
    #[arg(long, default_value_t = 40)]
    n_max: usize,
}

impl SweepArgs {
    fn limits(self) -> CaseLimits {
        CaseLimits { k_max: self.k_max, cap_max: self.cap_max, n_max: self.n_max }
    }
}

#[derive(Subcommand)]
enum Check {
    Surrounding(SweepArgs),
    Faithful(SweepArgs),
    Ratio(SweepArgs),
    /// Bound of the rule guarded by one extra server at distance d.
    Adx {
        #[arg(long)]
        servers: String,
        #[arg(long)]
        d: String,
        #[arg(long)]
        x: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Worst grid rate with capacities never exceeds the unit-capacity one.
    Capacity {
        #[arg(long, value_parser = parse_rule, default_value = "ptcp")]
        alg: RuleKind,
        #[arg(long)]
        servers: String,
        /// Capacity profiles separated by `;`, e.g. `2,2;3,3`.
        #[arg(long)]
        profiles: String,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
    },
    /// Exhaustive worst rate over grid sequences against 2α+1.
    Grid {
        #[arg(long, value_parser = parse_rule, default_value = "ptcp")]
        alg: RuleKind,
        #[arg(long)]
        servers: String,
        /// Comma-separated capacities (default 1 each).
        #[arg(long)]
        capacities: Option<String>,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        /// Leave out gap midpoints.
        #[arg(long)]
        reduced: bool,
    },
    /// Structure of hybrid runs.
    Hybrid {
        #[arg(long, value_parser = parse_rule, default_value = "ptcp")]
        alg: RuleKind,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
    },
}

fn parse_algorithm(s: &str) -> Result<AlgorithmId, String> {
    s.parse().map_err(|e: ofal_core::OfalError| e.to_string())
}

fn parse_rule(s: &str) -> Result<RuleKind, String> {
    s.parse().map_err(|e: ofal_core::OfalError| e.to_string())
}

fn parse_table(s: &str) -> Result<HeadlineTable, String> {
    s.parse().map_err(|e: ofal_core::OfalError| e.to_string())
}

fn parse_list<T>(text: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn layout_of(servers: &str) -> Result<ServerLayout> {
    Ok(ServerLayout::new(parse_list(servers, |s| Ok(parse_coord(s)?))?)?)
}

impl InstanceArgs {
    fn load(&self) -> Result<Instance> {
        if let Some(path) = &self.instance {
            return load_instance(path).with_context(|| format!("reading {}", path.display()));
        }
        let Some(servers) = &self.servers else { bail!("pass --instance or --servers") };
        let layout = layout_of(servers)?;
        Ok(match &self.capacities {
            Some(caps) => Instance::new(layout, parse_list(caps, |s| Ok(s.parse()?))?)?,
            None => Instance::unit(layout),
        })
    }
}

impl SequenceArgs {
    fn load(&self) -> Result<RequestSequence> {
        if let Some(path) = &self.sequence {
            return load_sequence(path).with_context(|| format!("reading {}", path.display()));
        }
        let Some(requests) = &self.requests else { bail!("pass --sequence or --requests") };
        Ok(RequestSequence::new(parse_list(requests, |s| Ok(parse_coord(s)?))?))
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn emit_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    println!("{}", header.join(","));
    for row in rows {
        println!("{}", row.join(","));
    }
}

/// `true` when the command found a bound violation.
fn run(cli: &Cli) -> Result<bool> {
    let format = cli.format;
    match &cli.command {
        Command::Alpha { instance, bruteforce } => {
            let inst = instance.load()?;
            let fast = alpha_fast(inst.layout());
            if *bruteforce {
                let brute = alpha_bruteforce(inst.layout())?;
                if brute.alpha != fast.alpha {
                    bail!("alpha mismatch: fast {} vs exhaustive {}", fast.alpha, brute.alpha);
                }
            }
            match format {
                Format::Json => emit_json(&serde_json::json!({
                    "l_value": format_coord(&fast.l_value),
                    "alpha": format_coord(&fast.alpha),
                    "bound": format_coord(&fast.bound()),
                    "witness": fast.witness,
                }))?,
                Format::Csv => emit_csv(
                    &["l_value", "alpha", "bound"],
                    [vec![format_coord(&fast.l_value), format_coord(&fast.alpha), format_coord(&fast.bound())]],
                ),
            }
        }
        Command::Tree { instance } => {
            let inst = instance.load()?;
            let tree = SplitTree::build(inst.layout());
            match format {
                Format::Json => emit_json(&tree)?,
                Format::Csv => emit_csv(
                    &["lo", "hi", "last_left", "gap", "critical_point"],
                    tree.splits().map(|(node, split)| {
                        vec![
                            node.lo.to_string(),
                            node.hi.to_string(),
                            split.last_left.to_string(),
                            format_coord(&split.gap),
                            format_coord(&split.critical_point),
                        ]
                    }),
                ),
            }
        }
        Command::Simulate { alg, instance, sequence } => {
            let inst = instance.load()?;
            let seq = sequence.load()?;
            let trace = alg.run(&inst, &seq)?;
            match format {
                Format::Json => emit_json(&trace)?,
                Format::Csv => emit_csv(
                    &["step", "request", "server", "position", "cost"],
                    seq.iter().enumerate().map(|(t, r)| {
                        let j = trace.assignment[t];
                        vec![
                            t.to_string(),
                            format_coord(r),
                            j.to_string(),
                            format_coord(inst.position(j)),
                            format_coord(&trace.per_step_cost[t]),
                        ]
                    }),
                ),
            }
        }
        Command::Opt { instance, sequence, method } => {
            let inst = instance.load()?;
            let seq = sequence.load()?;
            let (cost, assignment) = match method {
                OptMethod::Flow => {
                    let o = optimal_cost(&inst, &seq)?;
                    (o.cost, Some(o.assignment))
                }
                OptMethod::Bruteforce => {
                    let o = optimal_bruteforce(&inst, &seq)?;
                    (o.cost, Some(o.assignment))
                }
                OptMethod::Dp => (noncrossing_dp_cost(&inst, &seq)?, None),
            };
            match format {
                Format::Json => emit_json(&serde_json::json!({
                    "cost": format_coord(&cost),
                    "assignment": assignment,
                }))?,
                Format::Csv => emit_csv(&["cost"], [vec![format_coord(&cost)]]),
            }
        }
        Command::Adversary { family, k, epsilon, capacity } => {
            let eps = parse_coord(epsilon)?;
            let (params, (inst, seq)) = match family {
                Family::Greedy => {
                    let p = AdversaryParams::greedy(*k, &eps, *capacity)?;
                    let built = greedy_adversary(&p)?;
                    (p, built)
                }
                Family::Permutation => {
                    let p = AdversaryParams::permutation(*k, &eps, *capacity)?;
                    let built = permutation_adversary(&p)?;
                    (p, built)
                }
            };
            match format {
                Format::Json => emit_json(&serde_json::json!({
                    "params": params,
                    "instance": inst,
                    "sequence": seq,
                }))?,
                Format::Csv => emit_csv(&["request"], seq.iter().map(|r| vec![format_coord(r)])),
            }
        }
        Command::Verify { check } => {
            let report = verify(check, cli.seed)?;
            match format {
                Format::Json => emit_json(&report)?,
                Format::Csv => emit_csv(
                    &["property", "trials", "violations", "verdict"],
                    [vec![
                        report.property.clone(),
                        report.trials.to_string(),
                        report.violations.len().to_string(),
                        if report.passed() { "pass" } else { "fail" }.to_string(),
                    ]],
                ),
            }
            return Ok(!report.passed());
        }
        Command::Run { config, csv, json } => {
            let mut config = ExperimentConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
            if csv.is_some() {
                config.csv_path = csv.clone();
            }
            if json.is_some() {
                config.json_path = json.clone();
            }
            let report = run_experiment(&config)?;
            match format {
                Format::Json => emit_json(&serde_json::json!({
                    "name": report.summary.name,
                    "cases": report.summary.cases,
                    "max_rate": report.summary.max_rate,
                    "violations": report.summary.violations.len(),
                }))?,
                Format::Csv => print!("{}", rows_to_csv(&report.rows)?),
            }
            return Ok(!report.passed());
        }
        Command::Reproduce { table } => {
            let t = reproduce(*table)?;
            match format {
                Format::Json => emit_json(&t)?,
                Format::Csv => emit_csv(
                    &["k", "algorithm", "rate", "rate_decimal", "target", "ok"],
                    t.rows.iter().map(|r| {
                        let decimal = r.rate.finite().map_or("inf".into(), |q| to_decimal(q, 12));
                        vec![r.k.to_string(), r.algorithm.clone(), r.rate.to_string(), decimal, r.target.clone(), r.ok.to_string()]
                    }),
                ),
            }
            return Ok(!t.passed());
        }
    }
    Ok(false)
}

fn verify(check: &Check, seed: u64) -> Result<PropertyReport> {
    Ok(match check {
        Check::Surrounding(a) => surrounding_sweep(a.alg, a.trials, seed, a.limits())?,
        Check::Faithful(a) => faithful_sweep(a.alg, a.trials, seed, a.limits())?,
        Check::Ratio(a) => ratio_sweep(a.alg, a.trials, seed, a.limits())?,
        Check::Adx { servers, d, x, trials } => {
            adx_sweep(&layout_of(servers)?, &parse_coord(d)?, &parse_coord(x)?, *trials, seed)?
        }
        Check::Capacity { alg, servers, profiles, n_max } => {
            let layout = layout_of(servers)?;
            let profiles: Vec<Vec<u32>> = profiles
                .split(';')
                .map(|p| parse_list(p, |s| Ok(s.parse()?)))
                .collect::<Result<_>>()?;
            let grid = GridSpec::full(&layout);
            capacity_insensitivity_probe(&alg.build(&layout), &layout, &profiles, &grid, *n_max, u128::MAX)?
        }
        Check::Grid { alg, servers, capacities, n_max, reduced } => {
            let args = InstanceArgs { instance: None, servers: Some(servers.clone()), capacities: capacities.clone() };
            let inst = args.load()?;
            let layout = inst.layout();
            let grid = if *reduced { GridSpec::reduced(layout) } else { GridSpec::full(layout) };
            let worst = grid_worst_rate(&alg.build(layout), &inst, &grid, *n_max, u128::MAX)?;
            let bound = ratio_bound(layout);
            let violations = if worst.rate.le(&bound) {
                vec![]
            } else {
                vec![Finding {
                    detail: format!("rate {} exceeds {}", worst.rate, format_coord(&bound)),
                    instance: inst.clone(),
                    sequence: worst.sequence.clone(),
                    seed: None,
                }]
            };
            PropertyReport::new(format!("grid-worst-rate/{}", alg.name()), 1, violations)
                .note("worst_rate", &worst.rate)
                .note("bound", format_coord(&bound))
                .note("explored", worst.explored)
        }
        Check::Hybrid { alg, trials, k_max } => hybrid_sweep(*alg, *trials, seed, *k_max)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
