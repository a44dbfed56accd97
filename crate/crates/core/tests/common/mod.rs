//! Shared test utilities: the labeled-host enumeration oracle for the
//! transferring estimators, and generators for random small cases.
//!
//! The oracle walks every labeled assignment of individual hosts to channels
//! and sums the probability of the assignments matching a requested
//! allocation. It shares no code with the closed-form estimators.

use std::collections::BTreeMap;

use pathfinder_core::anatomy::{CaseClass, InvasionCase};
use pathfinder_core::estimators::{SourceClass, SourceContext};
use pathfinder_core::graph::{NodeId, SurveillanceSeries};
use pathfinder_core::rng::KeyedRng;

/// Enumerate every labeled assignment of `hosts` hosts to `probs` channels,
/// calling `f` with per-channel counts and the assignment probability.
fn each_assignment(hosts: u64, probs: &[f64], f: &mut impl FnMut(&[u64], f64)) {
    fn recurse(
        remaining: u64,
        probs: &[f64],
        counts: &mut Vec<u64>,
        prob: f64,
        f: &mut impl FnMut(&[u64], f64),
    ) {
        if remaining == 0 {
            f(counts, prob);
            return;
        }
        for c in 0..probs.len() {
            if probs[c] <= 0.0 {
                continue;
            }
            counts[c] += 1;
            recurse(remaining - 1, probs, counts, prob * probs[c], f);
            counts[c] -= 1;
        }
    }
    let mut counts = vec![0u64; probs.len()];
    recurse(hosts, probs, &mut counts, 1.0, f);
}

/// Distribution over invasion-edge count vectors for one source, computed by
/// labeled-host enumeration under the source's observability class.
pub fn oracle_row_distribution(ctx: &SourceContext) -> BTreeMap<Vec<u64>, f64> {
    let rho = ctx.invasion_rates.len();
    let mut rows: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    match ctx.class {
        SourceClass::Unobservable => {
            // every host: invasion edges at raw rates, or the hidden lump
            // (hidden edges + staying); observable edges are excluded mass.
            let mut probs = ctx.invasion_rates.clone();
            probs.push(ctx.hidden_edge_mass + ctx.stay_prob);
            each_assignment(ctx.i_prev, &probs, &mut |counts, p| {
                *rows.entry(counts[..rho].to_vec()).or_insert(0.0) += p;
            });
        }
        SourceClass::ObservableItoS => {
            // all hosts left and avoided observable destinations: relative
            // rates over invasion plus hidden edges.
            let d: f64 = ctx.invasion_rates.iter().sum::<f64>() + ctx.hidden_edge_mass;
            let mut probs: Vec<f64> = ctx.invasion_rates.iter().map(|p| p / d).collect();
            probs.push(ctx.hidden_edge_mass / d);
            each_assignment(ctx.i_prev, &probs, &mut |counts, p| {
                *rows.entry(counts[..rho].to_vec()).or_insert(0.0) += p;
            });
        }
        SourceClass::PartiallyObservable => {
            // confirmed travelers (the observed drop) behave like I->S hosts;
            // the remaining pool behaves like unobservable hosts.
            let delta = ctx.i_prev - ctx.i_now;
            let pool = ctx.i_now;
            let d: f64 = ctx.invasion_rates.iter().sum::<f64>() + ctx.hidden_edge_mass;
            let mut confirmed_probs: Vec<f64> =
                ctx.invasion_rates.iter().map(|p| p / d).collect();
            confirmed_probs.push(ctx.hidden_edge_mass / d);
            let mut pool_probs = ctx.invasion_rates.clone();
            pool_probs.push(ctx.hidden_edge_mass + ctx.stay_prob);
            each_assignment(delta, &confirmed_probs, &mut |confirmed, pc| {
                let confirmed = confirmed[..rho].to_vec();
                each_assignment(pool, &pool_probs, &mut |pooled, pp| {
                    let total: Vec<u64> = confirmed
                        .iter()
                        .zip(&pooled[..rho])
                        .map(|(&a, &b)| a + b)
                        .collect();
                    *rows.entry(total).or_insert(0.0) += pc * pp;
                });
            });
        }
    }
    rows
}

/// Oracle value of the transferring estimator for one allocation.
pub fn oracle_omega(ctx: &SourceContext, alloc: &[u64]) -> f64 {
    oracle_row_distribution(ctx)
        .get(alloc)
        .copied()
        .unwrap_or(0.0)
}

/// A random small case: contexts plus the case skeleton and the series that
/// backs `enumerate_solutions`.
pub struct RandomCase {
    pub case: InvasionCase,
    pub contexts: Vec<SourceContext>,
    pub series: SurveillanceSeries,
}

/// Posterior over allocations by pure oracle enumeration: convolve the
/// per-source row distributions and keep combinations whose per-destination
/// totals equal the arrivals.
pub fn oracle_case_posteriors(case: &InvasionCase, contexts: &[SourceContext]) -> BTreeMap<Vec<u64>, f64> {
    let rows_per_source: Vec<Vec<(Vec<u64>, f64)>> = contexts
        .iter()
        .map(|ctx| oracle_row_distribution(ctx).into_iter().collect())
        .collect();
    // edge indices per source, in case edge order
    let source_edges: Vec<Vec<usize>> = case
        .sources
        .iter()
        .map(|&s| {
            case.invasion_edges
                .iter()
                .enumerate()
                .filter(|&(_, &(src, _))| src == s)
                .map(|(e, _)| e)
                .collect()
        })
        .collect();
    let mut joint: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    fn recurse(
        source: usize,
        rows_per_source: &[Vec<(Vec<u64>, f64)>],
        source_edges: &[Vec<usize>],
        alloc: &mut Vec<u64>,
        prob: f64,
        joint: &mut BTreeMap<Vec<u64>, f64>,
    ) {
        if source == rows_per_source.len() {
            *joint.entry(alloc.clone()).or_insert(0.0) += prob;
            return;
        }
        for (row, p) in &rows_per_source[source] {
            for (&e, &v) in source_edges[source].iter().zip(row) {
                alloc[e] = v;
            }
            recurse(source + 1, rows_per_source, source_edges, alloc, prob * p, joint);
        }
        for &e in &source_edges[source] {
            alloc[e] = 0;
        }
    }
    let mut alloc = vec![0u64; case.invasion_edges.len()];
    recurse(0, &rows_per_source, &source_edges, &mut alloc, 1.0, &mut joint);

    // keep allocations matching the observed arrivals, then normalize
    let mut feasible: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for (alloc, p) in joint {
        let ok = case.destinations.iter().enumerate().all(|(k, &dst)| {
            let total: u64 = case
                .invasion_edges
                .iter()
                .zip(&alloc)
                .filter(|&(&(_, d), _)| d == dst)
                .map(|(_, &v)| v)
                .sum();
            total == case.arrivals[k]
        });
        if ok {
            feasible.insert(alloc, p);
        }
    }
    let z: f64 = feasible.values().sum();
    for v in feasible.values_mut() {
        *v /= z;
    }
    feasible
}

/// Draw a random source context with at most `max_edges` invasion edges.
pub fn random_context(rng: &mut KeyedRng, max_edges: usize) -> SourceContext {
    let class = match rng.next_below(3) {
        0 => SourceClass::Unobservable,
        1 => SourceClass::PartiallyObservable,
        _ => SourceClass::ObservableItoS,
    };
    let i_prev = match class {
        SourceClass::PartiallyObservable => 2 + rng.next_below(3), // 2..=4
        _ => 1 + rng.next_below(4),                                // 1..=4
    };
    let i_now = match class {
        SourceClass::Unobservable => i_prev + rng.next_below(3),
        SourceClass::PartiallyObservable => 1 + rng.next_below(i_prev - 1),
        SourceClass::ObservableItoS => 0,
    };
    let rho = 1 + rng.next_below(max_edges as u64) as usize;
    let invasion_rates: Vec<f64> = (0..rho).map(|_| 0.01 + 0.15 * rng.next_f64()).collect();
    let hidden_edge_mass = if rng.next_below(4) == 0 {
        0.0
    } else {
        0.05 + 0.25 * rng.next_f64()
    };
    let observable_mass = if rng.next_below(2) == 0 {
        0.0
    } else {
        0.05 + 0.15 * rng.next_f64()
    };
    SourceContext {
        i_prev,
        i_now,
        invasion_rates,
        hidden_edge_mass,
        stay_prob: 0.0, // set by normalized()
        observable_mass,
        class,
    }
    .normalized()
}

/// Helper trait to renormalize a randomly drawn context so that all masses
/// sum below one with positive residence probability.
pub trait Normalized {
    fn normalized(self) -> Self;
}

impl Normalized for SourceContext {
    fn normalized(mut self) -> Self {
        let used: f64 =
            self.invasion_rates.iter().sum::<f64>() + self.hidden_edge_mass + self.observable_mass;
        if used >= 0.9 {
            let scale = 0.9 / used;
            for p in &mut self.invasion_rates {
                *p *= scale;
            }
            self.hidden_edge_mass *= scale;
            self.observable_mass *= scale;
        }
        let used: f64 =
            self.invasion_rates.iter().sum::<f64>() + self.hidden_edge_mass + self.observable_mass;
        self.stay_prob = 1.0 - used;
        self
    }
}

/// Build a random estimation case: `m` sources in 2..=3, `n` destinations in
/// 1..=2, arrivals at most 3, capacities at most 4. Returns `None` when the
/// drawn combination is infeasible (arrivals exceeding reachable capacity).
pub fn random_case(rng: &mut KeyedRng) -> Option<RandomCase> {
    let m = 2 + rng.next_below(2) as usize;
    let n = 1 + rng.next_below(2) as usize;
    let sources: Vec<NodeId> = (0..m as u32).collect();
    let destinations: Vec<NodeId> = (m as u32..(m + n) as u32).collect();

    // every source gets at least one edge; every destination must be covered
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    for &s in &sources {
        let d = destinations[rng.next_below(n as u64) as usize];
        edges.push((s, d));
    }
    for &d in &destinations {
        if !edges.iter().any(|&(_, dst)| dst == d) {
            let s = sources[rng.next_below(m as u64) as usize];
            edges.push((s, d));
        }
    }
    // sprinkle extra edges
    for &s in &sources {
        for &d in &destinations {
            if !edges.contains(&(s, d)) && rng.next_below(3) == 0 {
                edges.push((s, d));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut contexts = Vec::with_capacity(m);
    for &s in &sources {
        let rho = edges.iter().filter(|&&(src, _)| src == s).count();
        let mut ctx = random_context(rng, 1);
        let mut rates: Vec<f64> = (0..rho).map(|_| 0.01 + 0.15 * rng.next_f64()).collect();
        rates.truncate(rho);
        ctx.invasion_rates = rates;
        contexts.push(ctx.normalized());
    }

    let arrivals: Vec<u64> = (0..n).map(|_| 1 + rng.next_below(3)).collect();

    // capacity feasibility per destination and overall
    for (k, &d) in destinations.iter().enumerate() {
        let cap: u64 = edges
            .iter()
            .filter(|&&(_, dst)| dst == d)
            .map(|&(src, _)| contexts[src as usize].i_prev)
            .sum();
        if cap < arrivals[k] {
            return None;
        }
    }
    // source capacities must admit the joint demand; cheap necessary check
    let total_cap: u64 = contexts.iter().map(|c| c.i_prev).sum();
    if total_cap < arrivals.iter().sum() {
        return None;
    }

    let case = InvasionCase {
        tick: 1,
        sources: sources.clone(),
        destinations: destinations.clone(),
        invasion_edges: edges,
        arrivals: arrivals.clone(),
        class: CaseClass::of(m, n),
    };

    let node_count = m + n;
    let mut series = SurveillanceSeries::new(node_count);
    let mut row0 = vec![0u64; node_count];
    let mut row1 = vec![0u64; node_count];
    for (i, ctx) in contexts.iter().enumerate() {
        row0[i] = ctx.i_prev;
        row1[i] = ctx.i_now;
    }
    for (k, &d) in destinations.iter().enumerate() {
        row1[d as usize] = arrivals[k];
    }
    series.push_row(&row0);
    series.push_row(&row1);

    Some(RandomCase {
        case,
        contexts,
        series,
    })
}
