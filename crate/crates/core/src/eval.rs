//! Accuracy metrics and experiment orchestration.
//!
//! Identified pathways are scored against the simulator's ground truth: the
//! true pathway set holds one directed edge per contributing source of every
//! first arrival, and accuracy is the fraction of true edges recovered.
//! Time-stamped trees must match the tick as well; static baseline trees are
//! credited on the (src, dst) pair alone.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::CaseClass;
use crate::baselines::{self, BaselineError, ARR_ALPHA};
use crate::graph::{MetapopNetwork, NodeId};
use crate::ipi::{self, CaseIdentification, IdentifyOptions, IpiError};
use crate::rng::absorb;
use crate::sim::{self, GroundTruthLog, SimConfig, SimError};
use crate::tree::PathwayTree;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("tree references node {node} outside the {nodes}-node network")]
    NodeOutOfRange { node: NodeId, nodes: usize },
    #[error("unknown method `{0}` (expected ipi, arr, eff, or mcml)")]
    UnknownMethod(String),
    #[error("experiment needs at least one realization")]
    NoRealizations,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Ipi(#[from] IpiError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ipi,
    Arr,
    Eff,
    Mcml,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ipi => "ipi",
            Method::Arr => "arr",
            Method::Eff => "eff",
            Method::Mcml => "mcml",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipi" => Ok(Method::Ipi),
            "arr" => Ok(Method::Arr),
            "eff" => Ok(Method::Eff),
            "mcml" => Ok(Method::Mcml),
            other => Err(EvalError::UnknownMethod(other.to_string())),
        }
    }
}

/// One true invasion edge: a first arrival carried by `src -> dst` at `tick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthEdge {
    pub tick: u32,
    pub src: NodeId,
    pub dst: NodeId,
}

/// All true pathway edges of a realization, every epoch included.
pub fn truth_edges(log: &GroundTruthLog) -> Vec<TruthEdge> {
    let mut edges = Vec::new();
    for (node, records) in log.first_arrivals.iter().enumerate() {
        for record in records {
            for &(src, _) in &record.sources {
                edges.push(TruthEdge {
                    tick: record.tick,
                    src,
                    dst: node as NodeId,
                });
            }
        }
    }
    edges.sort();
    edges
}

/// The early-stage window: the first `cutoff` distinct subpopulations ever
/// infected (seed included) and the tick at which the last of them appeared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyWindow {
    pub nodes: BTreeSet<NodeId>,
    pub cutoff_tick: u32,
}

pub fn early_window(log: &GroundTruthLog, seed_node: NodeId, cutoff: usize) -> EarlyWindow {
    let mut firsts: Vec<(u32, NodeId)> = vec![(0, seed_node)];
    for (node, records) in log.first_arrivals.iter().enumerate() {
        if node as NodeId == seed_node {
            continue;
        }
        if let Some(first) = records.first() {
            firsts.push((first.tick, node as NodeId));
        }
    }
    firsts.sort_unstable();
    firsts.truncate(cutoff.max(1));
    EarlyWindow {
        cutoff_tick: firsts.last().map(|&(t, _)| t).unwrap_or(0),
        nodes: firsts.into_iter().map(|(_, n)| n).collect(),
    }
}

fn early_subset(truth: &[TruthEdge], window: &EarlyWindow) -> Vec<TruthEdge> {
    truth
        .iter()
        .filter(|e| e.tick <= window.cutoff_tick && window.nodes.contains(&e.dst))
        .copied()
        .collect()
}

/// Matched/total counts over arbitrary truth subsets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub matched: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.matched as f64 / self.total as f64)
        }
    }
}

/// Accuracy of one tree against one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub method: String,
    pub whole: Tally,
    pub early: Tally,
    /// Accumulative per-class tallies for the estimated classes
    /// (mI->S and mI->nS), whole pathway and early stage.
    pub per_class: BTreeMap<String, Tally>,
    pub per_class_early: BTreeMap<String, Tally>,
}

fn matches_tree(
    edge: &TruthEdge,
    timed: &BTreeSet<(u32, NodeId, NodeId)>,
    untimed: &BTreeSet<(NodeId, NodeId)>,
    has_ticks: bool,
) -> bool {
    if has_ticks {
        timed.contains(&(edge.tick, edge.src, edge.dst))
    } else {
        untimed.contains(&(edge.src, edge.dst))
    }
}

/// Score a tree against the true pathway edges. `class_of` maps
/// (tick, destination) to the case class of the invasion partition; only
/// the estimated classes are tallied per class.
pub fn score_tree(
    tree: &PathwayTree,
    truth: &[TruthEdge],
    window: &EarlyWindow,
    class_of: &BTreeMap<(u32, NodeId), CaseClass>,
    node_count: usize,
    method: &str,
) -> Result<AccuracyReport, EvalError> {
    for e in &tree.edges {
        for node in [e.src, e.dst] {
            if node as usize >= node_count {
                return Err(EvalError::NodeOutOfRange {
                    node,
                    nodes: node_count,
                });
            }
        }
    }
    let has_ticks = tree.edges.iter().all(|e| e.tick.is_some()) && !tree.edges.is_empty();
    let timed: BTreeSet<(u32, NodeId, NodeId)> = tree
        .edges
        .iter()
        .filter_map(|e| e.tick.map(|t| (t, e.src, e.dst)))
        .collect();
    let untimed: BTreeSet<(NodeId, NodeId)> = tree.edges.iter().map(|e| (e.src, e.dst)).collect();

    let early = early_subset(truth, window);
    let mut report = AccuracyReport {
        method: method.to_string(),
        whole: Tally::default(),
        early: Tally::default(),
        per_class: BTreeMap::new(),
        per_class_early: BTreeMap::new(),
    };
    let classes = [CaseClass::ManyToSingle, CaseClass::ManyToMany];
    for class in classes {
        report.per_class.insert(class.label().to_string(), Tally::default());
        report
            .per_class_early
            .insert(class.label().to_string(), Tally::default());
    }

    let mut tally = |edges: &[TruthEdge], whole: bool| {
        for e in edges {
            let hit = matches_tree(e, &timed, &untimed, has_ticks);
            let slot = if whole {
                &mut report.whole
            } else {
                &mut report.early
            };
            slot.total += 1;
            slot.matched += hit as usize;
            if let Some(&class) = class_of.get(&(e.tick, e.dst)) {
                if classes.contains(&class) {
                    let map = if whole {
                        &mut report.per_class
                    } else {
                        &mut report.per_class_early
                    };
                    let t = map.get_mut(class.label()).expect("class pre-seeded");
                    t.total += 1;
                    t.matched += hit as usize;
                }
            }
        }
    };
    tally(truth, true);
    tally(&early, false);
    Ok(report)
}

/// Class of each (tick, destination) pair under the invasion partition.
pub fn class_map(cases: &[crate::anatomy::InvasionCase]) -> BTreeMap<(u32, NodeId), CaseClass> {
    let mut map = BTreeMap::new();
    for case in cases {
        for &dst in &case.destinations {
            map.insert((case.tick, dst), case.class);
        }
    }
    map
}

/// True support of one identified case: the ground-truth arcs into its
/// destinations at its tick.
pub fn true_support(case: &crate::anatomy::InvasionCase, truth: &[TruthEdge]) -> BTreeSet<(NodeId, NodeId)> {
    let dests: BTreeSet<NodeId> = case.destinations.iter().copied().collect();
    truth
        .iter()
        .filter(|e| e.tick == case.tick && dests.contains(&e.dst))
        .map(|e| (e.src, e.dst))
        .collect()
}

/// Identifiability diagnostics of an estimated case, with correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDiagnostic {
    pub realization: u32,
    pub case_id: usize,
    pub class: String,
    pub solution_count: usize,
    pub entropy: f64,
    pub identifiability: f64,
    pub correct: bool,
}

/// Rows for estimated (mI->S / mI->nS) cases of one identified realization.
pub fn case_diagnostics(
    realization: u32,
    cases: &[CaseIdentification],
    truth: &[TruthEdge],
) -> Vec<CaseDiagnostic> {
    cases
        .iter()
        .filter(|c| !c.case.class.is_forced())
        .map(|c| {
            let identified: BTreeSet<(NodeId, NodeId)> =
                c.pathway.support.iter().copied().collect();
            CaseDiagnostic {
                realization,
                case_id: c.case_id,
                class: c.case.class.label().to_string(),
                solution_count: c.pathway.solution_count,
                entropy: c.report.entropy,
                identifiability: c.report.identifiability,
                correct: identified == true_support(&c.case, truth),
            }
        })
        .collect()
}

/// Mean identifiability of wrong versus correct estimated cases.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MisidentificationSummary {
    pub wrong_count: usize,
    pub correct_count: usize,
    pub mean_identifiability_wrong: Option<f64>,
    pub mean_identifiability_correct: Option<f64>,
}

pub fn misidentification_stats(diagnostics: &[CaseDiagnostic]) -> MisidentificationSummary {
    let mean_of = |correct: bool| {
        let values: Vec<f64> = diagnostics
            .iter()
            .filter(|d| d.correct == correct)
            .map(|d| d.identifiability)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    MisidentificationSummary {
        wrong_count: diagnostics.iter().filter(|d| !d.correct).count(),
        correct_count: diagnostics.iter().filter(|d| d.correct).count(),
        mean_identifiability_wrong: mean_of(false),
        mean_identifiability_correct: mean_of(true),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub realizations: u32,
    pub sim: SimConfig,
    pub mcml_runs: u32,
    /// Early-stage cutoff; defaults to 50 distinct infected subpopulations
    /// for networks up to 500 nodes and 300 above that.
    pub early_cutoff: Option<usize>,
    pub identify: IdentifyOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Ipi, Method::Arr, Method::Eff, Method::Mcml],
            realizations: 20,
            sim: SimConfig::default(),
            mcml_runs: 100,
            early_cutoff: None,
            identify: IdentifyOptions::default(),
        }
    }
}

pub fn default_early_cutoff(node_count: usize) -> usize {
    if node_count <= 500 {
        50
    } else {
        300
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRow {
    pub realization: u32,
    pub method: String,
    pub whole: Tally,
    pub early: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub mean_early_accuracy: Option<f64>,
    pub std_early_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccumRow {
    pub method: String,
    pub class: String,
    pub whole: Tally,
    pub early: Tally,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub master_seed: u64,
    pub realizations: u32,
    pub methods: Vec<String>,
    pub early_cutoff: usize,
    pub mcml_runs: u32,
    pub per_realization: Vec<RealizationRow>,
    pub method_summaries: Vec<MethodSummary>,
    pub per_class: Vec<ClassAccumRow>,
    pub wrong_cases: Vec<CaseDiagnostic>,
    pub misidentification: MisidentificationSummary,
    pub misidentification_mi_to_s: MisidentificationSummary,
    pub skipped_cases: usize,
    /// Realizations whose truth set was empty (no spread).
    pub no_spread: Vec<u32>,
    /// Case diagnostics across all realizations (estimated classes only).
    pub diagnostics: Vec<CaseDiagnostic>,
}

struct RealizationOutcome {
    rows: Vec<RealizationRow>,
    per_class: Vec<(String, String, Tally, Tally)>,
    diagnostics: Vec<CaseDiagnostic>,
    skipped: usize,
    no_spread: bool,
}

/// Simulate, identify, and score `realizations` independent spreads on one
/// network. Deterministic for a given master seed (`config.sim.rng_seed`);
/// realizations run in parallel.
pub fn run_experiment(
    network: &MetapopNetwork,
    config: &ExperimentConfig,
) -> Result<AggregateReport, EvalError> {
    if config.realizations == 0 {
        return Err(EvalError::NoRealizations);
    }
    let master = config.sim.rng_seed;
    let early_cutoff = config
        .early_cutoff
        .unwrap_or_else(|| default_early_cutoff(network.node_count()));

    // Static baseline trees are a property of the network, built once.
    let arr = if config.methods.contains(&Method::Arr) {
        Some(baselines::arr_tree(network, config.sim.seed_node, ARR_ALPHA)?)
    } else {
        None
    };
    let eff = if config.methods.contains(&Method::Eff) {
        Some(baselines::eff_tree(network, config.sim.seed_node)?)
    } else {
        None
    };
    let mcml = if config.methods.contains(&Method::Mcml) {
        let mcml_config = SimConfig {
            rng_seed: absorb(master, 0x4d43_4d4c),
            ..config.sim.clone()
        };
        Some(baselines::mcml_tree(network, &mcml_config, config.mcml_runs)?)
    } else {
        None
    };

    let outcomes: Vec<RealizationOutcome> = (0..config.realizations)
        .into_par_iter()
        .map(|r| -> Result<RealizationOutcome, EvalError> {
            let sim_config = SimConfig {
                rng_seed: absorb(absorb(master, 0x5245_414c), r as u64),
                ..config.sim.clone()
            };
            let (series, log) = sim::run(network, &sim_config)?;
            let truth = truth_edges(&log);
            let window = early_window(&log, config.sim.seed_node, early_cutoff);
            let outcome = ipi::identify_realization(network, &series, &config.identify)?;
            let classes = class_map(&outcome.all_cases);

            let mut rows = Vec::new();
            let mut per_class = Vec::new();
            for method in &config.methods {
                let tree = match method {
                    Method::Ipi => &outcome.tree,
                    Method::Arr => arr.as_ref().expect("built above"),
                    Method::Eff => eff.as_ref().expect("built above"),
                    Method::Mcml => mcml.as_ref().expect("built above"),
                };
                let report = score_tree(
                    tree,
                    &truth,
                    &window,
                    &classes,
                    network.node_count(),
                    method.label(),
                )?;
                rows.push(RealizationRow {
                    realization: r,
                    method: method.label().to_string(),
                    whole: report.whole,
                    early: report.early,
                });
                for (class, tally) in &report.per_class {
                    let early = report.per_class_early[class];
                    per_class.push((method.label().to_string(), class.clone(), *tally, early));
                }
            }
            let diagnostics = case_diagnostics(r, &outcome.cases, &truth);
            Ok(RealizationOutcome {
                rows,
                per_class,
                diagnostics,
                skipped: outcome.skipped.len(),
                no_spread: truth.is_empty(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut per_realization = Vec::new();
    let mut per_class_map: BTreeMap<(String, String), (Tally, Tally)> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    let mut skipped_cases = 0usize;
    let mut no_spread = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        per_realization.extend(outcome.rows);
        for (method, class, whole, early) in outcome.per_class {
            let entry = per_class_map.entry((method, class)).or_default();
            entry.0.matched += whole.matched;
            entry.0.total += whole.total;
            entry.1.matched += early.matched;
            entry.1.total += early.total;
        }
        diagnostics.extend(outcome.diagnostics);
        skipped_cases += outcome.skipped;
        if outcome.no_spread {
            no_spread.push(r as u32);
        }
    }

    let method_summaries = config
        .methods
        .iter()
        .map(|m| {
            let acc: Vec<f64> = per_realization
                .iter()
                .filter(|row| row.method == m.label())
                .filter_map(|row| row.whole.accuracy())
                .collect();
            let early: Vec<f64> = per_realization
                .iter()
                .filter(|row| row.method == m.label())
                .filter_map(|row| row.early.accuracy())
                .collect();
            MethodSummary {
                method: m.label().to_string(),
                mean_accuracy: mean(&acc),
                std_accuracy: std_dev(&acc),
                mean_early_accuracy: mean(&early),
                std_early_accuracy: std_dev(&early),
            }
        })
        .collect();

    let per_class = per_class_map
        .into_iter()
        .map(|((method, class), (whole, early))| ClassAccumRow {
            method,
            class,
            whole,
            early,
        })
        .collect();

    let wrong_cases: Vec<CaseDiagnostic> =
        diagnostics.iter().filter(|d| !d.correct).cloned().collect();
    let misidentification = misidentification_stats(&diagnostics);
    let mi_to_s: Vec<CaseDiagnostic> = diagnostics
        .iter()
        .filter(|d| d.class == CaseClass::ManyToSingle.label())
        .cloned()
        .collect();
    let misidentification_mi_to_s = misidentification_stats(&mi_to_s);

    Ok(AggregateReport {
        master_seed: master,
        realizations: config.realizations,
        methods: config.methods.iter().map(|m| m.label().to_string()).collect(),
        early_cutoff,
        mcml_runs: config.mcml_runs,
        per_realization,
        method_summaries,
        per_class,
        wrong_cases,
        misidentification,
        misidentification_mi_to_s,
        skipped_cases,
        no_spread,
        diagnostics,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

impl AggregateReport {
    pub fn summary_of(&self, method: Method) -> Option<&MethodSummary> {
        self.method_summaries.iter().find(|s| s.method == method.label())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), EvalError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| EvalError::Io(e.into()))?;
        Ok(())
    }

    /// `realization,method,accuracy,early_accuracy`
    pub fn save_per_realization_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "realization,method,accuracy,early_accuracy")?;
        for row in &self.per_realization {
            writeln!(
                out,
                "{},{},{},{}",
                row.realization,
                row.method,
                fmt_opt(row.whole.accuracy()),
                fmt_opt(row.early.accuracy())
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_per_class_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "method,class,matched,total,accuracy,early_matched,early_total,early_accuracy"
        )?;
        for row in &self.per_class {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.method,
                row.class,
                row.whole.matched,
                row.whole.total,
                fmt_opt(row.whole.accuracy()),
                row.early.matched,
                row.early.total,
                fmt_opt(row.early.accuracy())
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// `case_id,class,M,entropy,identifiability` with a composite
    /// realization:case id.
    pub fn save_wrong_cases_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "case_id,class,M,entropy,identifiability")?;
        for d in &self.wrong_cases {
            writeln!(
                out,
                "{}:{},{},{},{},{}",
                d.realization, d.case_id, d.class, d.solution_count, d.entropy, d.identifiability
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}
