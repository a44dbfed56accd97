//! `pathfinder` command-line pipeline:
//! generate -> simulate -> identify / baseline -> evaluate -> report.
//!
//! All artifacts of a pipeline live in one run directory under fixed file
//! names, so later steps discover their inputs without extra flags. Every
//! step records its resolved configuration and file digests in the run
//! directory's manifest. All randomness derives from a single seed, making
//! repeated runs byte-identical.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pathfinder_core::anatomy::{classify_observability, CaseRecord};
use pathfinder_core::baselines::{self, ARR_ALPHA};
use pathfinder_core::eval::{self, ExperimentConfig, Method};
use pathfinder_core::ipi::{self, IdentifyOptions};
use pathfinder_core::netgen::{self, NetGenConfig};
use pathfinder_core::sim::{self, SimConfig, StopRule};
use pathfinder_core::{GroundTruthLog, MetapopNetwork, SurveillanceSeries};

use manifest::{digest_file, record_step, FileDigest, StepRecord};

const NETWORK_FILE: &str = "network.txt";
const SURVEILLANCE_FILE: &str = "surveillance.csv";
const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
const IPI_TREE_FILE: &str = "ipi_tree.csv";
const IPI_REPORT_FILE: &str = "ipi_report.json";
const CASES_FILE: &str = "cases.jsonl";
const AGGREGATE_FILE: &str = "aggregate.json";
const PER_REALIZATION_FILE: &str = "per_realization.csv";
const PER_CLASS_FILE: &str = "per_class.csv";
const WRONG_CASES_FILE: &str = "wrong_cases.csv";
const SUMMARY_FILE: &str = "summary.json";

#[derive(Parser)]
#[command(
    name = "pathfinder",
    version,
    about = "Metapopulation epidemic simulation and invasion-pathway inference"
)]
struct Cli {
    /// Run directory holding the pipeline artifacts.
    #[arg(long, global = true, default_value = "run")]
    run: PathBuf,
    /// Optional TOML configuration file (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (also PATHFINDER_JOBS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic metapopulation network.
    Generate(GenerateArgs),
    /// Run one stochastic SI realization on a network.
    Simulate(SimulateArgs),
    /// Identify invasion pathways from surveillance data.
    Identify(IdentifyArgs),
    /// Build a baseline tree (arr, eff, or mcml).
    Baseline(BaselineArgs),
    /// Score methods over many independent realizations.
    Evaluate(EvaluateArgs),
    /// Merge evaluation reports into a summary.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Number of subpopulations.
    #[arg(long)]
    nodes: Option<usize>,
    /// Edges attached per new node.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "theta-mean")]
    theta_mean: Option<f64>,
    #[arg(long = "theta-var")]
    theta_var: Option<f64>,
    /// Total outbound mobility rate per node.
    #[arg(long = "C")]
    mobility: Option<f64>,
    /// Initial population per subpopulation.
    #[arg(long)]
    pop: Option<u64>,
    /// RNG seed (alias --seed; also PATHFINDER_RNG).
    #[arg(long, visible_alias = "seed")]
    rng: Option<u64>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Network file (defaults to <run>/network.txt).
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "seed-node")]
    seed_node: Option<u32>,
    #[arg(long = "seed-count")]
    seed_count: Option<u64>,
    /// Maximum number of ticks.
    #[arg(long)]
    ticks: Option<u32>,
    /// Stop rule: all-infected or tick-limit.
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    rng: Option<u64>,
}

#[derive(Args, Serialize)]
struct IdentifyArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    surveillance: Option<PathBuf>,
    /// Abort a case whose allocation count exceeds this limit.
    #[arg(long = "max-solutions")]
    max_solutions: Option<usize>,
}

#[derive(Args, Serialize)]
struct BaselineArgs {
    /// arr, eff, or mcml.
    #[arg(long)]
    method: String,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long = "seed-node")]
    seed_node: Option<u32>,
    /// Monte-Carlo runs (mcml only).
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "seed-count")]
    seed_count: Option<u64>,
    #[arg(long)]
    ticks: Option<u32>,
    #[arg(long)]
    rng: Option<u64>,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    /// Comma-separated subset of ipi,arr,eff,mcml.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    realizations: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "seed-node")]
    seed_node: Option<u32>,
    #[arg(long = "seed-count")]
    seed_count: Option<u64>,
    #[arg(long)]
    ticks: Option<u32>,
    #[arg(long = "mcml-runs")]
    mcml_runs: Option<u32>,
    #[arg(long = "early-cutoff")]
    early_cutoff: Option<usize>,
    #[arg(long = "max-solutions")]
    max_solutions: Option<usize>,
    #[arg(long)]
    rng: Option<u64>,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Additional run directories with aggregate.json files to merge.
    #[arg(value_name = "DIR")]
    extra_runs: Vec<PathBuf>,
}

/// Exit codes: 2 usage / missing files, 3 data inconsistency, 1 other.
enum AppError {
    Usage(String),
    Data(String),
    Other(anyhow::Error),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Other(_) => 1,
        }
    }
    fn message(&self) -> String {
        match self {
            AppError::Usage(m) | AppError::Data(m) => m.clone(),
            AppError::Other(e) => format!("{e:#}"),
        }
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Other(e)
    }
}

/// TOML configuration file; every key mirrors the flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    generate: GenerateSection,
    simulate: SimulateSection,
    baseline: BaselineSection,
    evaluate: EvaluateSection,
    identify: IdentifySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct GenerateSection {
    nodes: Option<usize>,
    m: Option<usize>,
    theta_mean: Option<f64>,
    theta_var: Option<f64>,
    #[serde(rename = "C")]
    mobility: Option<f64>,
    pop: Option<u64>,
    rng: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SimulateSection {
    beta: Option<f64>,
    seed_node: Option<u32>,
    seed_count: Option<u64>,
    ticks: Option<u32>,
    stop: Option<String>,
    rng: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct BaselineSection {
    runs: Option<u32>,
    rng: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct EvaluateSection {
    methods: Option<String>,
    realizations: Option<u32>,
    mcml_runs: Option<u32>,
    early_cutoff: Option<usize>,
    rng: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct IdentifySection {
    max_solutions: Option<usize>,
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn env_usize(name: &str) -> Option<usize> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

/// Seed precedence: flag > PATHFINDER_RNG > config file > 0.
fn resolve_rng(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or_else(|| env_u64("PATHFINDER_RNG")).or(config).unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let file_config = load_config(cli.config.as_deref())?;
    let jobs = cli.jobs.or_else(|| env_usize("PATHFINDER_JOBS"));
    if let Some(jobs) = jobs {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    std::fs::create_dir_all(&cli.run)
        .with_context(|| format!("cannot create run directory {}", cli.run.display()))
        .map_err(AppError::Other)?;

    match &cli.command {
        Command::Generate(args) => generate(&cli, args, &file_config),
        Command::Simulate(args) => simulate(&cli, args, &file_config),
        Command::Identify(args) => identify(&cli, args, &file_config),
        Command::Baseline(args) => baseline(&cli, args, &file_config),
        Command::Evaluate(args) => evaluate(&cli, args, &file_config),
        Command::Report(args) => report(&cli, args),
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, AppError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    if !path.exists() {
        return Err(AppError::Usage(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(AppError::Other)?;
    toml::from_str(&text)
        .map_err(|e| AppError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> Result<(), AppError> {
    if path.exists() {
        Ok(())
    } else {
        Err(AppError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn load_network(path: &Path) -> Result<MetapopNetwork, AppError> {
    require_file(path, "network file")?;
    MetapopNetwork::load(path)
        .map_err(|e| AppError::Data(format!("network {}: {e}", path.display())))
}

fn load_surveillance(path: &Path) -> Result<SurveillanceSeries, AppError> {
    require_file(path, "surveillance file")?;
    SurveillanceSeries::load_csv(path)
        .map_err(|e| AppError::Data(format!("surveillance {}: {e}", path.display())))
}

fn step_record(
    command: &str,
    master_seed: u64,
    resolved: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: &[PathBuf],
) -> Result<StepRecord> {
    let mut output_digests = Vec::with_capacity(outputs.len());
    for path in outputs {
        output_digests.push(digest_file(path)?);
    }
    Ok(StepRecord {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        resolved,
        inputs,
        outputs: output_digests,
    })
}

fn generate(cli: &Cli, args: &GenerateArgs, file: &FileConfig) -> Result<(), AppError> {
    let section = &file.generate;
    let config = NetGenConfig {
        node_count: args.nodes.or(section.nodes).unwrap_or(300),
        attachment_m: args.m.or(section.m).unwrap_or(8),
        theta_mean: args.theta_mean.or(section.theta_mean).unwrap_or(0.5),
        theta_var: args.theta_var.or(section.theta_var).unwrap_or(0.01),
        mobility_constant: args.mobility.or(section.mobility).unwrap_or(0.1),
        initial_population: args.pop.or(section.pop).unwrap_or(600_000),
        seed: resolve_rng(args.rng, section.rng),
        ..Default::default()
    };
    let network = netgen::generate(&config)
        .map_err(|e| AppError::Data(format!("generation failed: {e}")))?;
    let out = cli.run.join(NETWORK_FILE);
    network
        .save(&out)
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(AppError::Other)?;
    let resolved = serde_json::to_value(&config).expect("config serializes");
    let step = step_record("generate", config.seed, resolved, vec![], &[out.clone()])?;
    record_step(&cli.run, step).map_err(AppError::Other)?;
    println!(
        "generated {} nodes ({} arcs) -> {}",
        network.node_count(),
        network.arcs().count(),
        out.display()
    );
    Ok(())
}

fn sim_config_from(
    beta: Option<f64>,
    seed_node: Option<u32>,
    seed_count: Option<u64>,
    ticks: Option<u32>,
    stop: Option<&str>,
    rng: u64,
) -> Result<SimConfig, AppError> {
    let stop_rule = match stop.unwrap_or("all-infected") {
        "all-infected" => StopRule::AllInfected,
        "tick-limit" => StopRule::TickLimit,
        other => {
            return Err(AppError::Usage(format!(
                "unknown stop rule `{other}` (expected all-infected or tick-limit)"
            )))
        }
    };
    Ok(SimConfig {
        beta: beta.unwrap_or(0.3),
        seed_node: seed_node.unwrap_or(0),
        seed_infected: seed_count.unwrap_or(5),
        max_ticks: ticks.unwrap_or(365),
        rng_seed: rng,
        stop_rule,
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs, file: &FileConfig) -> Result<(), AppError> {
    let section = &file.simulate;
    let network_path = args
        .network
        .clone()
        .unwrap_or_else(|| cli.run.join(NETWORK_FILE));
    let network = load_network(&network_path)?;
    let config = sim_config_from(
        args.beta.or(section.beta),
        args.seed_node.or(section.seed_node),
        args.seed_count.or(section.seed_count),
        args.ticks.or(section.ticks),
        args.stop.as_deref().or(section.stop.as_deref()),
        resolve_rng(args.rng, section.rng),
    )?;
    let (series, log) = sim::run(&network, &config)
        .map_err(|e| AppError::Data(format!("simulation failed: {e}")))?;

    let surveillance_path = cli.run.join(SURVEILLANCE_FILE);
    let truth_path = cli.run.join(GROUND_TRUTH_FILE);
    series
        .save_csv(&surveillance_path)
        .map_err(|e| AppError::Other(e.into()))?;
    log.save_csv(&truth_path).map_err(|e| AppError::Other(e.into()))?;

    let resolved = serde_json::to_value(&config).expect("config serializes");
    let inputs = vec![digest_file(&network_path).map_err(AppError::Other)?];
    let step = step_record(
        "simulate",
        config.rng_seed,
        resolved,
        inputs,
        &[surveillance_path.clone(), truth_path],
    )?;
    record_step(&cli.run, step).map_err(AppError::Other)?;
    println!(
        "simulated {} ticks ({} infected moves) -> {}",
        series.ticks() - 1,
        log.moves.len(),
        surveillance_path.display()
    );
    Ok(())
}

fn identify(cli: &Cli, args: &IdentifyArgs, file: &FileConfig) -> Result<(), AppError> {
    let network_path = args
        .network
        .clone()
        .unwrap_or_else(|| cli.run.join(NETWORK_FILE));
    let surveillance_path = args
        .surveillance
        .clone()
        .unwrap_or_else(|| cli.run.join(SURVEILLANCE_FILE));
    let network = load_network(&network_path)?;
    let series = load_surveillance(&surveillance_path)?;
    let options = IdentifyOptions {
        max_solutions: args
            .max_solutions
            .or(file.identify.max_solutions)
            .unwrap_or_else(|| IdentifyOptions::default().max_solutions),
    };

    let outcome = ipi::identify_realization(&network, &series, &options)
        .map_err(|e| AppError::Data(format!("identification failed: {e}")))?;

    let tree_path = cli.run.join(IPI_TREE_FILE);
    let report_path = cli.run.join(IPI_REPORT_FILE);
    let cases_path = cli.run.join(CASES_FILE);
    outcome
        .save_tree_csv(&tree_path)
        .map_err(|e| AppError::Other(e.into()))?;
    outcome
        .save_report_json(&report_path)
        .map_err(|e| AppError::Other(e.into()))?;

    let records: Vec<CaseRecord> = outcome
        .all_cases
        .iter()
        .enumerate()
        .map(|(id, case)| {
            let view = classify_observability(case, &series, &network);
            CaseRecord::new(id, case, &view)
        })
        .collect();
    pathfinder_core::anatomy::write_cases_jsonl(&records, &cases_path)
        .map_err(|e| AppError::Other(e.into()))?;

    let resolved = serde_json::to_value(&options).expect("options serialize");
    let inputs = vec![
        digest_file(&network_path).map_err(AppError::Other)?,
        digest_file(&surveillance_path).map_err(AppError::Other)?,
    ];
    let step = step_record(
        "identify",
        0,
        resolved,
        inputs,
        &[tree_path, report_path, cases_path],
    )?;
    record_step(&cli.run, step).map_err(AppError::Other)?;

    println!(
        "identified {} cases ({} skipped), {} pathway edges",
        outcome.cases.len(),
        outcome.skipped.len(),
        outcome.tree.edges.len()
    );
    if !outcome.skipped.is_empty() {
        for s in &outcome.skipped {
            eprintln!("skipped case {} (tick {}, {}): {}", s.case_id, s.tick, s.class, s.reason);
        }
        let data_errors = outcome.skipped.iter().filter(|s| s.data_error).count();
        if data_errors > 0 {
            return Err(AppError::Data(format!(
                "{data_errors} case(s) skipped for inconsistent data"
            )));
        }
    }
    Ok(())
}

fn baseline(cli: &Cli, args: &BaselineArgs, file: &FileConfig) -> Result<(), AppError> {
    let network_path = args
        .network
        .clone()
        .unwrap_or_else(|| cli.run.join(NETWORK_FILE));
    let network = load_network(&network_path)?;
    let seed_node = args.seed_node.unwrap_or(0);
    let rng = resolve_rng(args.rng, file.baseline.rng);
    let (tree, header) = match args.method.as_str() {
        "arr" => (
            baselines::arr_tree(&network, seed_node, ARR_ALPHA)
                .map_err(|e| AppError::Data(e.to_string()))?,
            format!("method=arr alpha={ARR_ALPHA} seed_node={seed_node}"),
        ),
        "eff" => (
            baselines::eff_tree(&network, seed_node).map_err(|e| AppError::Data(e.to_string()))?,
            format!("method=eff seed_node={seed_node}"),
        ),
        "mcml" => {
            let runs = args.runs.or(file.baseline.runs).unwrap_or(100);
            let config = sim_config_from(
                args.beta,
                Some(seed_node),
                args.seed_count,
                args.ticks,
                None,
                rng,
            )?;
            (
                baselines::mcml_tree(&network, &config, runs)
                    .map_err(|e| AppError::Data(e.to_string()))?,
                format!("method=mcml runs={runs} seed_node={seed_node} rng={rng}"),
            )
        }
        other => {
            return Err(AppError::Usage(format!(
                "unknown baseline method `{other}` (expected arr, eff, or mcml)"
            )))
        }
    };
    let out = cli.run.join(format!("baseline_{}.csv", args.method));
    tree.save_csv(&out, &header)
        .map_err(|e| AppError::Other(e.into()))?;
    let resolved = serde_json::to_value(args).expect("args serialize");
    let inputs = vec![digest_file(&network_path).map_err(AppError::Other)?];
    let step = step_record(
        &format!("baseline_{}", args.method),
        rng,
        resolved,
        inputs,
        &[out.clone()],
    )?;
    record_step(&cli.run, step).map_err(AppError::Other)?;
    println!("{} tree with {} edges -> {}", args.method, tree.edges.len(), out.display());
    Ok(())
}

fn evaluate(cli: &Cli, args: &EvaluateArgs, file: &FileConfig) -> Result<(), AppError> {
    let section = &file.evaluate;
    let network_path = args
        .network
        .clone()
        .unwrap_or_else(|| cli.run.join(NETWORK_FILE));
    let network = load_network(&network_path)?;
    let methods: Vec<Method> = args
        .methods
        .clone()
        .or_else(|| section.methods.clone())
        .unwrap_or_else(|| "ipi,arr,eff,mcml".to_string())
        .split(',')
        .map(|m| m.parse::<Method>())
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::Usage(e.to_string()))?;

    let sim = sim_config_from(
        args.beta,
        args.seed_node,
        args.seed_count,
        args.ticks,
        None,
        resolve_rng(args.rng, section.rng),
    )?;
    let config = ExperimentConfig {
        methods,
        realizations: args.realizations.or(section.realizations).unwrap_or(20),
        sim,
        mcml_runs: args.mcml_runs.or(section.mcml_runs).unwrap_or(100),
        early_cutoff: args.early_cutoff.or(section.early_cutoff),
        identify: IdentifyOptions {
            max_solutions: args
                .max_solutions
                .or(file.identify.max_solutions)
                .unwrap_or_else(|| IdentifyOptions::default().max_solutions),
        },
    };

    let report = eval::run_experiment(&network, &config)
        .map_err(|e| AppError::Data(format!("experiment failed: {e}")))?;

    let aggregate_path = cli.run.join(AGGREGATE_FILE);
    let per_real_path = cli.run.join(PER_REALIZATION_FILE);
    let per_class_path = cli.run.join(PER_CLASS_FILE);
    let wrong_path = cli.run.join(WRONG_CASES_FILE);
    report.save_json(&aggregate_path).map_err(|e| AppError::Other(e.into()))?;
    report
        .save_per_realization_csv(&per_real_path)
        .map_err(|e| AppError::Other(e.into()))?;
    report
        .save_per_class_csv(&per_class_path)
        .map_err(|e| AppError::Other(e.into()))?;
    report
        .save_wrong_cases_csv(&wrong_path)
        .map_err(|e| AppError::Other(e.into()))?;

    let resolved = serde_json::to_value(&config).expect("config serializes");
    let inputs = vec![digest_file(&network_path).map_err(AppError::Other)?];
    let step = step_record(
        "evaluate",
        config.sim.rng_seed,
        resolved,
        inputs,
        &[aggregate_path, per_real_path, per_class_path, wrong_path],
    )?;
    record_step(&cli.run, step).map_err(AppError::Other)?;

    for summary in &report.method_summaries {
        println!(
            "{:>4}: accuracy {:.4} (early {:.4})",
            summary.method,
            summary.mean_accuracy.unwrap_or(f64::NAN),
            summary.mean_early_accuracy.unwrap_or(f64::NAN),
        );
    }
    if !report.no_spread.is_empty() {
        println!("no-spread realizations: {:?}", report.no_spread);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MergedMethod {
    method: String,
    mean_accuracy: Option<f64>,
    mean_early_accuracy: Option<f64>,
    runs: usize,
}

#[derive(Debug, Serialize)]
struct Summary {
    runs: Vec<String>,
    methods: Vec<MergedMethod>,
    total_realizations: u32,
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<(), AppError> {
    let mut dirs = vec![cli.run.clone()];
    dirs.extend(args.extra_runs.iter().cloned());
    let mut aggregates = Vec::new();
    for dir in &dirs {
        let path = dir.join(AGGREGATE_FILE);
        require_file(&path, "aggregate report")?;
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(AppError::Other)?;
        let aggregate: eval::AggregateReport = serde_json::from_str(&text)
            .map_err(|e| AppError::Data(format!("invalid aggregate {}: {e}", path.display())))?;
        aggregates.push(aggregate);
    }

    let mut method_names: Vec<String> = Vec::new();
    for a in &aggregates {
        for m in &a.methods {
            if !method_names.contains(m) {
                method_names.push(m.clone());
            }
        }
    }
    let methods = method_names
        .iter()
        .map(|name| {
            let acc: Vec<f64> = aggregates
                .iter()
                .flat_map(|a| a.method_summaries.iter())
                .filter(|s| &s.method == name)
                .filter_map(|s| s.mean_accuracy)
                .collect();
            let early: Vec<f64> = aggregates
                .iter()
                .flat_map(|a| a.method_summaries.iter())
                .filter(|s| &s.method == name)
                .filter_map(|s| s.mean_early_accuracy)
                .collect();
            let avg = |v: &[f64]| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            MergedMethod {
                method: name.clone(),
                mean_accuracy: avg(&acc),
                mean_early_accuracy: avg(&early),
                runs: acc.len(),
            }
        })
        .collect();
    let summary = Summary {
        runs: dirs
            .iter()
            .map(|d| {
                d.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| d.display().to_string())
            })
            .collect(),
        methods,
        total_realizations: aggregates.iter().map(|a| a.realizations).sum(),
    };

    let out = cli.run.join(SUMMARY_FILE);
    let file = std::fs::File::create(&out)
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(AppError::Other)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)
        .map_err(|e| AppError::Other(e.into()))?;

    println!("{:<6} {:>10} {:>10}", "method", "accuracy", "early");
    for m in &summary.methods {
        println!(
            "{:<6} {:>10} {:>10}",
            m.method,
            m.mean_accuracy.map(|v| format!("{v:.4}")).unwrap_or_default(),
            m.mean_early_accuracy.map(|v| format!("{v:.4}")).unwrap_or_default()
        );
    }
    let step = step_record(
        "report",
        0,
        serde_json::json!({ "runs": summary.runs }),
        vec![],
        &[out],
    )?;
    record_step(&cli.run, step).map_err(AppError::Other)?;
    Ok(())
}
