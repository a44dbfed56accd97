//! Invasion-pathway identification engine.
//!
//! Per case: try the accurate-identification fast paths first; otherwise
//! enumerate every feasible allocation of arrivals to sources, weight each by
//! the product of per-source transferring likelihoods, normalize with Bayes,
//! merge allocations that activate the same edge set, and pick the most
//! likely pathway. Each identification also carries an entropy-based
//! identifiability score with provable lower and upper bounds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{
    classify_observability, detect_events, invasion_partition, AnatomyError, CaseClass,
    EdgeClass, InvasionCase, NodeObservability, ObservabilityView, Transition,
};
use crate::estimators::{
    log_omega_multi, log_omega_single, EstimatorError, SourceClass, SourceContext,
};
use crate::graph::{MetapopNetwork, NodeId, SurveillanceSeries};
use crate::logmath::log_sum_exp;
use crate::tree::{PathwayTree, TreeEdge};

#[derive(Debug, Error)]
pub enum IpiError {
    #[error(transparent)]
    Anatomy(#[from] AnatomyError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-case failure; the surrounding run records it and moves on.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case {case_id} (tick {tick}): surveillance admits no feasible allocation")]
    NoSolutions { case_id: usize, tick: u32 },
    #[error("case {case_id} (tick {tick}): more than {limit} candidate allocations")]
    TooManySolutions { case_id: usize, tick: u32, limit: usize },
    #[error("case {case_id} (tick {tick}): every candidate allocation has zero likelihood")]
    Degenerate { case_id: usize, tick: u32 },
    #[error("case {case_id} (tick {tick}): inconsistent data: {message}")]
    DataInconsistency { case_id: usize, tick: u32, message: String },
    #[error("case {case_id}: {source}")]
    Estimator { case_id: usize, source: EstimatorError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    /// Abort a case whose allocation count exceeds this limit.
    pub max_solutions: usize,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            max_solutions: 500_000,
        }
    }
}

impl CaseError {
    /// Whether the failure indicates inconsistent input data (as opposed to
    /// a resource limit).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, CaseError::TooManySolutions { .. })
    }
}

/// One feasible allocation of arrivals to invasion edges, with its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    /// Mover count per invasion edge, parallel to `case.invasion_edges`.
    pub allocation: Vec<u64>,
    pub log_weight: f64,
    pub posterior: f64,
}

/// The selected pathway of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedPathway {
    /// Invasion edges with at least one mover in the winning merged class.
    pub support: Vec<(NodeId, NodeId)>,
    /// Posterior mass of the winning merged class.
    pub merged_posterior: f64,
    /// Number of candidate allocations (1 on fast paths).
    pub solution_count: usize,
    /// Identified without enumeration (forced class or theorem).
    pub unique: bool,
    pub tie: bool,
}

/// Entropy-based difficulty diagnostics for one case.
///
/// All quantities live in allocation space: `top_posterior` is the largest
/// single-allocation posterior, and the bounds are provable for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    /// Normalized Shannon entropy of the allocation posteriors, in [0, 1].
    pub entropy: f64,
    /// Largest single-allocation posterior.
    pub top_posterior: f64,
    /// identifiability = top_posterior * (1 - entropy)
    pub identifiability: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Set when any bound is violated; must never fire.
    pub bound_violation: bool,
}

impl IdentifiabilityReport {
    fn certain() -> Self {
        Self {
            entropy: 0.0,
            top_posterior: 1.0,
            identifiability: 1.0,
            pi_min: 1.0,
            pi_max: 1.0,
            p_min: 1.0,
            p_max: 1.0,
            bound_violation: false,
        }
    }
}

/// Full identification record of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseIdentification {
    pub case_id: usize,
    pub case: InvasionCase,
    pub pathway: IdentifiedPathway,
    pub report: IdentifiabilityReport,
}

/// Identification of a whole realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationOutcome {
    pub cases: Vec<CaseIdentification>,
    /// Cases that could not be identified, with the reason.
    pub skipped: Vec<SkippedCase>,
    /// Every partitioned case, identified or not.
    pub all_cases: Vec<InvasionCase>,
    pub tree: PathwayTree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedCase {
    pub case_id: usize,
    pub tick: u32,
    pub class: String,
    pub reason: String,
    /// True for inconsistent data, false for resource limits.
    pub data_error: bool,
}

/// Build the estimator context of every source of a case.
pub fn source_contexts(
    case: &InvasionCase,
    view: &ObservabilityView,
    network: &MetapopNetwork,
    series: &SurveillanceSeries,
) -> Result<Vec<SourceContext>, EstimatorError> {
    let t = case.tick as usize;
    case.sources
        .iter()
        .map(|&i| {
            let i_prev = series.infected(t - 1, i);
            let i_now = series.infected(t, i);
            let invasion_rates: Vec<f64> = case
                .destinations_of(i)
                .iter()
                .map(|&dst| network.rate(i, dst).expect("invasion edge exists"))
                .collect();
            let mut hidden = 0.0f64;
            let mut observable = 0.0f64;
            for &(dst, rate) in network.neighbors(i) {
                match view.edge(i, dst) {
                    EdgeClass::Invasion => {}
                    EdgeClass::Observable => observable += rate,
                    EdgeClass::PartiallyObservable | EdgeClass::Unobservable => hidden += rate,
                }
            }
            let stay = (1.0 - network.out_rate_sum(i)).max(0.0);
            let class = match view.node(i) {
                NodeObservability::Unobservable => SourceClass::Unobservable,
                NodeObservability::PartiallyObservable { .. } => SourceClass::PartiallyObservable,
                NodeObservability::Observable { transition } => match transition {
                    Transition::ItoS => SourceClass::ObservableItoS,
                    _ => {
                        return Err(EstimatorError::InvalidContext(format!(
                            "source {i} shows a susceptible transition"
                        )))
                    }
                },
            };
            let ctx = SourceContext {
                i_prev,
                i_now,
                invasion_rates,
                hidden_edge_mass: hidden,
                stay_prob: stay,
                observable_mass: observable,
                class,
            };
            ctx.check()?;
            Ok(ctx)
        })
        .collect()
}

/// Accurate identification of an mI->S case: when every partially observable
/// source can only have sent its confirmed drop to the destination and the
/// drops exactly cover the arrivals, the allocation is forced.
pub fn theorem1_unique(case: &InvasionCase, view: &ObservabilityView) -> Option<Vec<u64>> {
    if case.class != CaseClass::ManyToSingle {
        return None;
    }
    let dst = case.destinations[0];
    let arrivals = case.arrivals[0];

    let mut drops: BTreeMap<NodeId, u64> = BTreeMap::new();
    for (&(src, edge_dst), &class) in &view.edges {
        if edge_dst == dst {
            continue;
        }
        if class != EdgeClass::Observable {
            // A partially observable source with a hidden outlet breaks the
            // theorem's premise.
            if matches!(view.node(src), NodeObservability::PartiallyObservable { .. }) {
                return None;
            }
        }
    }
    for &i in &case.sources {
        if let NodeObservability::PartiallyObservable { drop } = view.node(i) {
            drops.insert(i, drop);
        }
    }
    let total: u64 = drops.values().sum();
    if total != arrivals {
        return None;
    }
    let alloc: Vec<u64> = case
        .invasion_edges
        .iter()
        .map(|&(src, _)| drops.get(&src).copied().unwrap_or(0))
        .collect();
    Some(alloc)
}

/// Accurate identification of an mI->nS case: with few invasion edges, fully
/// observable surroundings, and drops matching arrivals, the linear system
/// (column sums = arrivals, row sums = drops) may pin the allocation.
/// Solved in exact rational arithmetic.
pub fn theorem2_unique(
    case: &InvasionCase,
    view: &ObservabilityView,
    series: &SurveillanceSeries,
    case_id: usize,
) -> Result<Option<Vec<u64>>, CaseError> {
    if case.class != CaseClass::ManyToMany {
        return Ok(None);
    }
    let edge_count = case.invasion_edges.len();
    if edge_count > case.sources.len() + case.destinations.len() {
        return Ok(None);
    }
    // Every non-destination neighbor of every source must be observable.
    for (&(_, _dst), &class) in &view.edges {
        if class == EdgeClass::PartiallyObservable || class == EdgeClass::Unobservable {
            return Ok(None);
        }
    }
    let t = case.tick as usize;
    let signed_drop = |i: NodeId| -> i64 {
        series.infected(t - 1, i) as i64 - series.infected(t, i) as i64
    };
    let total_drop: i64 = case.sources.iter().map(|&i| signed_drop(i)).sum();
    let total_arrivals: i64 = case.arrivals.iter().map(|&h| h as i64).sum();
    if total_drop != total_arrivals {
        return Ok(None);
    }

    // Augmented system over the invasion edges.
    let mut rows: Vec<Vec<Rational64>> = Vec::new();
    for (k, &dst) in case.destinations.iter().enumerate() {
        let mut row = vec![Rational64::zero(); edge_count + 1];
        for (e, &(_, d)) in case.invasion_edges.iter().enumerate() {
            if d == dst {
                row[e] = Rational64::from_integer(1);
            }
        }
        row[edge_count] = Rational64::from_integer(case.arrivals[k] as i64);
        rows.push(row);
    }
    for &src in &case.sources {
        let mut row = vec![Rational64::zero(); edge_count + 1];
        for (e, &(s, _)) in case.invasion_edges.iter().enumerate() {
            if s == src {
                row[e] = Rational64::from_integer(1);
            }
        }
        row[edge_count] = Rational64::from_integer(signed_drop(src));
        rows.push(row);
    }

    match solve_exact(rows, edge_count) {
        SolveOutcome::Unique(values) => {
            let mut alloc = Vec::with_capacity(edge_count);
            for v in values {
                if !v.is_integer() || v.is_negative() {
                    return Ok(None);
                }
                alloc.push(*v.numer() as u64);
            }
            Ok(Some(alloc))
        }
        SolveOutcome::Underdetermined => Ok(None),
        SolveOutcome::Inconsistent => Err(CaseError::DataInconsistency {
            case_id,
            tick: case.tick,
            message: "theorem-2 conditions hold but the arrival system has no solution"
                .to_string(),
        }),
    }
}

enum SolveOutcome {
    Unique(Vec<Rational64>),
    Underdetermined,
    Inconsistent,
}

/// Gauss-Jordan elimination over the rationals.
fn solve_exact(mut rows: Vec<Vec<Rational64>>, unknowns: usize) -> SolveOutcome {
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; unknowns];
    let mut next_row = 0usize;
    for col in 0..unknowns {
        let Some(pivot) = (next_row..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(next_row, pivot);
        let inv = rows[next_row][col].recip();
        for v in rows[next_row].iter_mut() {
            *v *= inv;
        }
        for r in 0..rows.len() {
            if r != next_row && !rows[r][col].is_zero() {
                let factor = rows[r][col];
                for c in 0..=unknowns {
                    let delta = factor * rows[next_row][c];
                    rows[r][c] -= delta;
                }
            }
        }
        pivot_of_col[col] = Some(next_row);
        next_row += 1;
    }
    for row in &rows[next_row..] {
        if row[..unknowns].iter().all(|v| v.is_zero()) && !row[unknowns].is_zero() {
            return SolveOutcome::Inconsistent;
        }
    }
    if pivot_of_col.iter().any(|p| p.is_none()) {
        return SolveOutcome::Underdetermined;
    }
    let values = pivot_of_col
        .into_iter()
        .map(|p| rows[p.expect("checked")][unknowns])
        .collect();
    SolveOutcome::Unique(values)
}

/// Enumerate every allocation of arrivals to invasion edges satisfying the
/// per-destination totals and the per-source capacity I(t-1).
pub fn enumerate_solutions(
    case: &InvasionCase,
    series: &SurveillanceSeries,
    case_id: usize,
    max_solutions: usize,
) -> Result<Vec<Vec<u64>>, CaseError> {
    let t = case.tick as usize;
    let mut capacity: BTreeMap<NodeId, u64> = BTreeMap::new();
    for &i in &case.sources {
        capacity.insert(i, series.infected(t - 1, i));
    }

    // Edge indices grouped per destination, in destination order.
    let per_dest: Vec<Vec<usize>> = case
        .destinations
        .iter()
        .map(|&dst| {
            case.invasion_edges
                .iter()
                .enumerate()
                .filter(|&(_, &(_, d))| d == dst)
                .map(|(e, _)| e)
                .collect()
        })
        .collect();

    let mut walk = Enumeration {
        case,
        case_id,
        per_dest: &per_dest,
        capacity: &mut capacity,
        current: vec![0u64; case.invasion_edges.len()],
        solutions: Vec::new(),
        max_solutions,
    };
    walk.destination(0)?;
    let solutions = walk.solutions;
    if solutions.is_empty() {
        return Err(CaseError::NoSolutions {
            case_id,
            tick: case.tick,
        });
    }
    Ok(solutions)
}

struct Enumeration<'a> {
    case: &'a InvasionCase,
    case_id: usize,
    per_dest: &'a [Vec<usize>],
    capacity: &'a mut BTreeMap<NodeId, u64>,
    current: Vec<u64>,
    solutions: Vec<Vec<u64>>,
    max_solutions: usize,
}

impl Enumeration<'_> {
    fn destination(&mut self, dest_idx: usize) -> Result<(), CaseError> {
        if dest_idx == self.case.destinations.len() {
            if self.solutions.len() >= self.max_solutions {
                return Err(CaseError::TooManySolutions {
                    case_id: self.case_id,
                    tick: self.case.tick,
                    limit: self.max_solutions,
                });
            }
            self.solutions.push(self.current.clone());
            return Ok(());
        }
        self.edge(dest_idx, 0, self.case.arrivals[dest_idx])
    }

    fn edge(&mut self, dest_idx: usize, pos: usize, remaining: u64) -> Result<(), CaseError> {
        let edges = &self.per_dest[dest_idx];
        if pos == edges.len() {
            if remaining == 0 {
                return self.destination(dest_idx + 1);
            }
            return Ok(());
        }
        let edge = edges[pos];
        let src = self.case.invasion_edges[edge].0;
        let cap = *self.capacity.get(&src).expect("source capacity");
        let last = pos + 1 == edges.len();
        let lo = if last { remaining } else { 0 };
        let hi = cap.min(remaining);
        if lo > hi {
            return Ok(());
        }
        for take in lo..=hi {
            self.current[edge] = take;
            *self.capacity.get_mut(&src).unwrap() = cap - take;
            let result = self.edge(dest_idx, pos + 1, remaining - take);
            *self.capacity.get_mut(&src).unwrap() = cap;
            self.current[edge] = 0;
            result?;
        }
        Ok(())
    }
}

/// Weight every allocation by the product of per-source transferring
/// likelihoods and normalize into posteriors.
pub fn score_solutions(
    case: &InvasionCase,
    contexts: &[SourceContext],
    allocations: Vec<Vec<u64>>,
    case_id: usize,
) -> Result<Vec<CandidateSolution>, CaseError> {
    // Row extractor: edge indices of each source, in destination order.
    let rows: Vec<Vec<usize>> = case
        .sources
        .iter()
        .map(|&src| {
            case.invasion_edges
                .iter()
                .enumerate()
                .filter(|&(_, &(s, _))| s == src)
                .map(|(e, _)| e)
                .collect()
        })
        .collect();

    // Each source takes only a handful of distinct row allocations across
    // the whole solution space (arrival counts are small), so its omega
    // values are memoized.
    let mut memo: Vec<BTreeMap<Vec<u64>, f64>> = vec![BTreeMap::new(); contexts.len()];
    let mut log_weights = Vec::with_capacity(allocations.len());
    for alloc in &allocations {
        let mut lw = 0.0f64;
        for ((ctx, row), cache) in contexts.iter().zip(&rows).zip(&mut memo) {
            let row_alloc: Vec<u64> = row.iter().map(|&e| alloc[e]).collect();
            let term = match cache.get(&row_alloc) {
                Some(&v) => v,
                None => {
                    let v = if row_alloc.len() == 1 {
                        log_omega_single(ctx, row_alloc[0])
                    } else {
                        log_omega_multi(ctx, &row_alloc)
                    }
                    .map_err(|source| CaseError::Estimator { case_id, source })?;
                    cache.insert(row_alloc, v);
                    v
                }
            };
            lw += term;
            if lw == f64::NEG_INFINITY {
                break;
            }
        }
        log_weights.push(lw);
    }

    let norm = log_sum_exp(&log_weights);
    if norm == f64::NEG_INFINITY {
        return Err(CaseError::Degenerate {
            case_id,
            tick: case.tick,
        });
    }
    Ok(allocations
        .into_iter()
        .zip(log_weights)
        .map(|(allocation, log_weight)| CandidateSolution {
            allocation,
            log_weight,
            posterior: (log_weight - norm).exp(),
        })
        .collect())
}

/// Group scored allocations by their active edge set, sum posteriors within a
/// group, and select the heaviest group. Exact ties break to the
/// lexicographically smallest support and are flagged.
pub fn merge_and_select(case: &InvasionCase, solutions: &[CandidateSolution]) -> IdentifiedPathway {
    let mut groups: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for solution in solutions {
        let support: Vec<usize> = solution
            .allocation
            .iter()
            .enumerate()
            .filter(|&(_, &h)| h > 0)
            .map(|(e, _)| e)
            .collect();
        *groups.entry(support).or_insert(0.0) += solution.posterior;
    }
    let mut winner: Option<(&Vec<usize>, f64)> = None;
    let mut tie = false;
    for (support, &mass) in &groups {
        match winner {
            None => winner = Some((support, mass)),
            Some((_, best)) => {
                if mass > best + 1e-12 {
                    winner = Some((support, mass));
                    tie = false;
                } else if (mass - best).abs() <= 1e-12 {
                    // BTreeMap iteration is ascending, so the earlier support
                    // already is the lexicographically smallest.
                    tie = true;
                }
            }
        }
    }
    let (support_idx, mass) = winner.expect("at least one solution");
    IdentifiedPathway {
        support: support_idx
            .iter()
            .map(|&e| case.invasion_edges[e])
            .collect(),
        merged_posterior: mass,
        solution_count: solutions.len(),
        unique: false,
        tie,
    }
}

/// Entropy, identifiability, and their bounds, all over allocation
/// posteriors. With M allocations and top posterior pi:
///
/// * entropy S = -(1/log M) * sum P log P, zero when M = 1;
/// * identifiability = pi * (1 - S);
/// * lower bound (1/M) * (1 - S') with S' the max entropy compatible with a
///   top mass of pi (pi plus a uniform remainder);
/// * upper bound pi * (1 - log(1/pi)/log M), from entropy >= log(1/pi).
pub fn compute_identifiability(solutions: &[CandidateSolution]) -> IdentifiabilityReport {
    let m = solutions.len();
    if m <= 1 {
        return IdentifiabilityReport::certain();
    }
    let ln_m = (m as f64).ln();
    let posteriors: Vec<f64> = solutions.iter().map(|s| s.posterior).collect();
    let pi = posteriors.iter().copied().fold(0.0f64, f64::max);

    let raw_entropy: f64 = posteriors
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let entropy = (raw_entropy / ln_m).clamp(0.0, 1.0);
    let identifiability = pi * (1.0 - entropy);

    // Fano-style maximum entropy given top mass pi.
    let fano = if pi >= 1.0 {
        0.0
    } else {
        let rest = (1.0 - pi) / (m as f64 - 1.0);
        ((-pi * pi.ln() - (1.0 - pi) * rest.ln()) / ln_m).clamp(0.0, 1.0)
    };
    let pi_min = (1.0 / m as f64) * (1.0 - fano);
    let pi_max = pi * (1.0 - (1.0 / pi).ln() / ln_m);

    let mut sorted = posteriors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p_max = sorted[m - 1] / (sorted[m - 2] + sorted[m - 1]);
    let p_min = (1.0 / m as f64).max(sorted[m - 1] / (sorted[0] + 1.0));

    let eps = 1e-9;
    let bound_violation = identifiability < pi_min - eps
        || identifiability > pi_max + eps
        || pi < p_min - eps
        || pi > p_max + eps;

    IdentifiabilityReport {
        entropy,
        top_posterior: pi,
        identifiability,
        pi_min,
        pi_max,
        p_min,
        p_max,
        bound_violation,
    }
}

/// Identify one case end to end.
pub fn identify_case(
    case_id: usize,
    case: &InvasionCase,
    view: &ObservabilityView,
    network: &MetapopNetwork,
    series: &SurveillanceSeries,
    options: &IdentifyOptions,
) -> Result<CaseIdentification, CaseError> {
    // Forced classes have a single possible source.
    if case.class.is_forced() {
        return Ok(CaseIdentification {
            case_id,
            case: case.clone(),
            pathway: IdentifiedPathway {
                support: case.invasion_edges.clone(),
                merged_posterior: 1.0,
                solution_count: 1,
                unique: true,
                tie: false,
            },
            report: IdentifiabilityReport::certain(),
        });
    }

    let forced_alloc = match case.class {
        CaseClass::ManyToSingle => theorem1_unique(case, view),
        CaseClass::ManyToMany => theorem2_unique(case, view, series, case_id)?,
        _ => unreachable!("forced classes handled above"),
    };
    if let Some(alloc) = forced_alloc {
        let support: Vec<(NodeId, NodeId)> = case
            .invasion_edges
            .iter()
            .zip(&alloc)
            .filter(|&(_, &h)| h > 0)
            .map(|(&e, _)| e)
            .collect();
        return Ok(CaseIdentification {
            case_id,
            case: case.clone(),
            pathway: IdentifiedPathway {
                support,
                merged_posterior: 1.0,
                solution_count: 1,
                unique: true,
                tie: false,
            },
            report: IdentifiabilityReport::certain(),
        });
    }

    let contexts = source_contexts(case, view, network, series)
        .map_err(|source| CaseError::Estimator { case_id, source })?;
    let allocations = enumerate_solutions(case, series, case_id, options.max_solutions)?;
    let solutions = score_solutions(case, &contexts, allocations, case_id)?;
    let pathway = merge_and_select(case, &solutions);
    let report = compute_identifiability(&solutions);
    Ok(CaseIdentification {
        case_id,
        case: case.clone(),
        pathway,
        report,
    })
}

/// Assemble identified case supports into the whole-pathway tree, in
/// chronological order.
pub fn assemble_tree(cases: &[CaseIdentification]) -> PathwayTree {
    let mut tree = PathwayTree::new(None);
    for c in cases {
        for &(src, dst) in &c.pathway.support {
            tree.edges.push(TreeEdge {
                tick: Some(c.case.tick),
                src,
                dst,
            });
        }
    }
    tree.edges.sort();
    tree
}

/// Detect, partition, classify, and identify every case of a realization.
pub fn identify_realization(
    network: &MetapopNetwork,
    series: &SurveillanceSeries,
    options: &IdentifyOptions,
) -> Result<IdentificationOutcome, IpiError> {
    let events = detect_events(series, network)?;
    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    let mut all_cases = Vec::new();
    let mut case_id = 0usize;
    for event in &events {
        for case in invasion_partition(event, network) {
            let view = classify_observability(&case, series, network);
            match identify_case(case_id, &case, &view, network, series, options) {
                Ok(identification) => cases.push(identification),
                Err(err) => skipped.push(SkippedCase {
                    case_id,
                    tick: case.tick,
                    class: case.class.label().to_string(),
                    reason: err.to_string(),
                    data_error: err.is_data_error(),
                }),
            }
            all_cases.push(case);
            case_id += 1;
        }
    }
    let tree = assemble_tree(&cases);
    Ok(IdentificationOutcome {
        cases,
        skipped,
        all_cases,
        tree,
    })
}

impl IdentificationOutcome {
    /// Write the identified-tree CSV:
    /// `tick,src,dst,case_id,case_class,pi,entropy,identifiability,unique`.
    pub fn save_tree_csv(&self, path: &Path) -> Result<(), IpiError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "tick,src,dst,case_id,case_class,pi,entropy,identifiability,unique")?;
        let mut rows: Vec<(u32, NodeId, NodeId, &CaseIdentification)> = Vec::new();
        for c in &self.cases {
            for &(src, dst) in &c.pathway.support {
                rows.push((c.case.tick, src, dst, c));
            }
        }
        rows.sort_by_key(|&(tick, src, dst, c)| (tick, src, dst, c.case_id));
        for (tick, src, dst, c) in rows {
            writeln!(
                out,
                "{tick},{src},{dst},{},{},{},{},{},{}",
                c.case_id,
                c.case.class.label(),
                c.pathway.merged_posterior,
                c.report.entropy,
                c.report.identifiability,
                c.pathway.unique
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Write the per-case diagnostics JSON report.
    pub fn save_report_json(&self, path: &Path) -> Result<(), IpiError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| IpiError::Io(e.into()))?;
        Ok(())
    }
}
