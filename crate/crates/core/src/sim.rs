//! Stochastic SI reaction-diffusion engine.
//!
//! Each tick runs the intra-population reaction first (new infections drawn
//! from a binomial with risk `beta * I_i / N_i`), then the inter-population
//! diffusion (multinomial departures per compartment, applied synchronously
//! from the post-reaction snapshot). Surveillance snapshots are taken after
//! both substeps. All draws come from keyed RNG streams, so a run is
//! bit-reproducible for a given seed regardless of iteration order.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, MetapopNetwork, NodeId, SurveillanceSeries};
use crate::rng::{binomial_draw, multinomial_draw, KeyedRng, Substep};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("seed node {0} out of range for {1} nodes")]
    SeedNodeOutOfRange(NodeId, usize),
    #[error("seed count {count} exceeds population {population} of node {node}")]
    SeedTooLarge { node: NodeId, count: u64, population: u64 },
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop once every subpopulation has at least one infected host
    /// (still bounded by `max_ticks`).
    AllInfected,
    /// Run exactly `max_ticks` ticks.
    TickLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Transmission rate per unit time.
    pub beta: f64,
    pub seed_node: NodeId,
    pub seed_infected: u64,
    pub max_ticks: u32,
    pub rng_seed: u64,
    pub stop_rule: StopRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            beta: 0.3,
            seed_node: 0,
            seed_infected: 5,
            max_ticks: 365,
            rng_seed: 0,
            stop_rule: StopRule::AllInfected,
        }
    }
}

/// Compartment counts per node; `N_i = susceptible[i] + infected[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub susceptible: Vec<u64>,
    pub infected: Vec<u64>,
}

impl SimState {
    pub fn population(&self, node: NodeId) -> u64 {
        self.susceptible[node as usize] + self.infected[node as usize]
    }

    pub fn total_population(&self) -> u64 {
        self.susceptible.iter().sum::<u64>() + self.infected.iter().sum::<u64>()
    }
}

/// One logged movement of infected hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectedMove {
    pub tick: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub count: u64,
}

/// First arrival of infected hosts into a previously susceptible node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstArrival {
    pub tick: u32,
    /// Contributing sources with mover counts, sorted by source id.
    pub sources: Vec<(NodeId, u64)>,
}

/// Complete movement log of one realization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLog {
    pub moves: Vec<InfectedMove>,
    /// Per node, one record per invasion epoch (reversion re-opens a node).
    pub first_arrivals: Vec<Vec<FirstArrival>>,
    /// Times the reaction risk `beta * I / N` had to be clamped to 1.
    pub clamp_warnings: u64,
}

impl GroundTruthLog {
    /// First-epoch arrival record of `node`, if it was ever invaded.
    pub fn first_arrival(&self, node: NodeId) -> Option<&FirstArrival> {
        self.first_arrivals[node as usize].first()
    }

    /// Write the ground-truth CSV `t,src,dst,count`.
    pub fn save_csv(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,src,dst,count")?;
        for m in &self.moves {
            writeln!(out, "{},{},{},{}", m.tick, m.src, m.dst, m.count)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load the move log and rebuild first-arrival records against the
    /// surveillance series of the same realization (the series tells exactly
    /// when each node was susceptible).
    pub fn load_csv(path: &Path, series: &SurveillanceSeries) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut moves = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed == "t,src,dst,count" || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 4 {
                return Err(GraphError::Parse {
                    line: idx + 1,
                    message: "expected `t,src,dst,count`".to_string(),
                });
            }
            let parse = |s: &str| -> Result<u64, GraphError> {
                s.parse().map_err(|_| GraphError::Parse {
                    line: idx + 1,
                    message: "invalid integer".to_string(),
                })
            };
            moves.push(InfectedMove {
                tick: parse(fields[0])? as u32,
                src: parse(fields[1])? as NodeId,
                dst: parse(fields[2])? as NodeId,
                count: parse(fields[3])?,
            });
        }
        Ok(Self::from_moves(moves, series))
    }

    /// Rebuild first-arrival records from a move list plus the surveillance
    /// series of the same realization.
    pub fn from_moves(moves: Vec<InfectedMove>, series: &SurveillanceSeries) -> Self {
        let node_count = series.node_count();
        let mut log = GroundTruthLog {
            moves,
            first_arrivals: vec![Vec::new(); node_count],
            clamp_warnings: 0,
        };
        let mut by_tick: std::collections::BTreeMap<u32, Vec<(NodeId, NodeId, u64)>> =
            Default::default();
        for m in &log.moves {
            by_tick
                .entry(m.tick)
                .or_default()
                .push((m.src, m.dst, m.count));
        }
        for (tick, moves) in by_tick {
            let t = tick as usize;
            if t == 0 || t >= series.ticks() {
                continue;
            }
            let mut per_dst: std::collections::BTreeMap<NodeId, Vec<(NodeId, u64)>> =
                Default::default();
            for (src, dst, count) in moves {
                if series.infected(t - 1, dst) == 0 {
                    per_dst.entry(dst).or_default().push((src, count));
                }
            }
            for (dst, mut sources) in per_dst {
                sources.sort_unstable();
                log.first_arrivals[dst as usize].push(FirstArrival { tick, sources });
            }
        }
        log
    }
}

/// Intra-population reaction substep. Returns the number of nodes whose risk
/// had to be clamped to 1.
pub fn react(
    state: &mut SimState,
    network: &MetapopNetwork,
    beta: f64,
    rng_seed: u64,
    tick: u32,
) -> u64 {
    let mut clamps = 0u64;
    for node in 0..network.node_count() {
        let i = state.infected[node];
        let s = state.susceptible[node];
        if i == 0 || s == 0 {
            continue;
        }
        let n = (i + s) as f64;
        let mut risk = beta * i as f64 / n;
        if risk > 1.0 {
            risk = 1.0;
            clamps += 1;
        }
        let mut rng = KeyedRng::substep(rng_seed, tick as u64, node as u64, Substep::React);
        let newly_infected = binomial_draw(&mut rng, s, risk);
        state.susceptible[node] -= newly_infected;
        state.infected[node] += newly_infected;
    }
    clamps
}

/// Inter-population diffusion substep. Departures are drawn per node and
/// compartment from the time-t snapshot and applied simultaneously; infected
/// movements are returned.
pub fn diffuse(
    state: &mut SimState,
    network: &MetapopNetwork,
    rng_seed: u64,
    tick: u32,
) -> Vec<InfectedMove> {
    let n = network.node_count();
    let mut arrivals_s = vec![0u64; n];
    let mut arrivals_i = vec![0u64; n];
    let mut departures_s = vec![0u64; n];
    let mut departures_i = vec![0u64; n];
    let mut moves = Vec::new();

    for node in 0..n {
        let neighbors = network.neighbors(node as NodeId);
        if neighbors.is_empty() {
            continue;
        }
        let rates: Vec<f64> = neighbors.iter().map(|&(_, r)| r).collect();

        let s_count = state.susceptible[node];
        if s_count > 0 {
            let mut rng = KeyedRng::substep(
                rng_seed,
                tick as u64,
                node as u64,
                Substep::DiffuseSusceptible,
            );
            let counts = multinomial_draw(&mut rng, s_count, &rates);
            for (&(dst, _), &c) in neighbors.iter().zip(&counts) {
                if c > 0 {
                    arrivals_s[dst as usize] += c;
                    departures_s[node] += c;
                }
            }
        }

        let i_count = state.infected[node];
        if i_count > 0 {
            let mut rng =
                KeyedRng::substep(rng_seed, tick as u64, node as u64, Substep::DiffuseInfected);
            let counts = multinomial_draw(&mut rng, i_count, &rates);
            for (&(dst, _), &c) in neighbors.iter().zip(&counts) {
                if c > 0 {
                    arrivals_i[dst as usize] += c;
                    departures_i[node] += c;
                    moves.push(InfectedMove {
                        tick,
                        src: node as NodeId,
                        dst,
                        count: c,
                    });
                }
            }
        }
    }

    for node in 0..n {
        state.susceptible[node] = state.susceptible[node] - departures_s[node] + arrivals_s[node];
        state.infected[node] = state.infected[node] - departures_i[node] + arrivals_i[node];
    }
    moves
}

/// Run one realization, producing the surveillance series and the complete
/// ground-truth movement log.
pub fn run(
    network: &MetapopNetwork,
    config: &SimConfig,
) -> Result<(SurveillanceSeries, GroundTruthLog), SimError> {
    let n = network.node_count();
    if config.beta < 0.0 {
        return Err(SimError::NegativeBeta(config.beta));
    }
    if config.seed_node as usize >= n {
        return Err(SimError::SeedNodeOutOfRange(config.seed_node, n));
    }
    let seed_pop = network.population(config.seed_node);
    if config.seed_infected > seed_pop {
        return Err(SimError::SeedTooLarge {
            node: config.seed_node,
            count: config.seed_infected,
            population: seed_pop,
        });
    }

    let mut state = SimState {
        susceptible: network.populations().to_vec(),
        infected: vec![0u64; n],
    };
    state.susceptible[config.seed_node as usize] -= config.seed_infected;
    state.infected[config.seed_node as usize] = config.seed_infected;
    let total_population: u64 = network.populations().iter().sum();

    let mut series = SurveillanceSeries::new(n);
    series.push_row(&state.infected);
    let populations: Vec<u64> = (0..n).map(|i| state.population(i as NodeId)).collect();
    series.push_population_row(&populations);

    let mut log = GroundTruthLog {
        moves: Vec::new(),
        first_arrivals: vec![Vec::new(); n],
        clamp_warnings: 0,
    };

    for tick in 1..=config.max_ticks {
        let infected_before: Vec<u64> = state.infected.clone();

        log.clamp_warnings += react(&mut state, network, config.beta, config.rng_seed, tick);
        let moves = diffuse(&mut state, network, config.rng_seed, tick);

        // First arrivals: nodes with no infected at the end of the previous
        // tick can only gain infected hosts through logged arrivals.
        let mut arrivals_by_dst: Vec<Vec<(NodeId, u64)>> = vec![Vec::new(); n];
        for m in &moves {
            arrivals_by_dst[m.dst as usize].push((m.src, m.count));
        }
        for node in 0..n {
            if infected_before[node] == 0 && !arrivals_by_dst[node].is_empty() {
                let mut sources = std::mem::take(&mut arrivals_by_dst[node]);
                sources.sort_unstable();
                log.first_arrivals[node].push(FirstArrival { tick, sources });
            }
        }
        log.moves.extend(moves);

        series.push_row(&state.infected);
        let populations: Vec<u64> = (0..n).map(|i| state.population(i as NodeId)).collect();
        series.push_population_row(&populations);

        debug_assert_eq!(state.total_population(), total_population);

        if config.stop_rule == StopRule::AllInfected && state.infected.iter().all(|&i| i > 0) {
            break;
        }
    }

    Ok((series, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_network(leaves: u32, rate: f64) -> MetapopNetwork {
        let n = leaves + 1;
        let mut arcs = Vec::new();
        for leaf in 1..n {
            arcs.push((0, leaf, rate));
            arcs.push((leaf, 0, rate));
        }
        MetapopNetwork::new(vec![1000; n as usize], &arcs, true).unwrap()
    }

    #[test]
    fn zero_beta_zero_rates_is_static() {
        let net = MetapopNetwork::new(vec![100, 100], &[(0, 1, 0.0), (1, 0, 0.0)], true).unwrap();
        let config = SimConfig {
            beta: 0.0,
            seed_infected: 5,
            max_ticks: 10,
            stop_rule: StopRule::TickLimit,
            ..Default::default()
        };
        let (series, log) = run(&net, &config).unwrap();
        for t in 0..series.ticks() {
            assert_eq!(series.infected(t, 0), 5);
            assert_eq!(series.infected(t, 1), 0);
        }
        assert!(log.moves.is_empty());
        assert!(log.first_arrivals.iter().all(|f| f.is_empty()));
    }

    #[test]
    fn react_mean_matches_binomial_mean() {
        // N=1000, S=900, I=100, beta=0.3: mean new infections = beta*S*I/N = 27.
        let net = MetapopNetwork::new(vec![1000], &[], true).unwrap();
        let mut total = 0u64;
        let reps = 100_000u32;
        for rep in 0..reps {
            let mut state = SimState {
                susceptible: vec![900],
                infected: vec![100],
            };
            react(&mut state, &net, 0.3, 12345, rep);
            total += state.infected[0] - 100;
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 27.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn react_no_infected_no_new_infections() {
        let net = MetapopNetwork::new(vec![1000], &[], true).unwrap();
        let mut state = SimState {
            susceptible: vec![1000],
            infected: vec![0],
        };
        react(&mut state, &net, 0.9, 1, 1);
        assert_eq!(state.infected[0], 0);
    }

    #[test]
    fn diffuse_conserves_and_logs() {
        let net = star_network(3, 0.1);
        let mut state = SimState {
            susceptible: vec![990, 1000, 1000, 1000],
            infected: vec![10, 0, 0, 0],
        };
        let before = state.total_population();
        let moves = diffuse(&mut state, &net, 7, 1);
        assert_eq!(state.total_population(), before);
        let moved: u64 = moves.iter().map(|m| m.count).sum();
        assert_eq!(moved + state.infected[0], 10);
    }

    #[test]
    fn star_first_arrivals_all_from_hub() {
        let net = star_network(6, 0.05);
        let config = SimConfig {
            beta: 0.8,
            seed_node: 0,
            seed_infected: 5,
            max_ticks: 200,
            rng_seed: 11,
            stop_rule: StopRule::AllInfected,
        };
        let (series, log) = run(&net, &config).unwrap();
        let last = series.ticks() - 1;
        for leaf in 1..7u32 {
            assert!(series.infected(last, leaf) > 0, "leaf {leaf} never infected");
            let first = log.first_arrival(leaf).expect("leaf invaded");
            assert!(first.sources.iter().all(|&(src, _)| src == 0));
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let net = star_network(4, 0.08);
        let config = SimConfig {
            beta: 0.4,
            max_ticks: 60,
            rng_seed: 99,
            ..Default::default()
        };
        let (s1, l1) = run(&net, &config).unwrap();
        let (s2, l2) = run(&net, &config).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn ground_truth_explains_every_invasion() {
        let net = star_network(5, 0.06);
        let config = SimConfig {
            beta: 0.5,
            max_ticks: 150,
            rng_seed: 3,
            ..Default::default()
        };
        let (series, log) = run(&net, &config).unwrap();
        for t in 1..series.ticks() {
            for node in 0..net.node_count() as NodeId {
                if series.infected(t - 1, node) == 0 && series.infected(t, node) > 0 {
                    let rec = log.first_arrivals[node as usize]
                        .iter()
                        .find(|f| f.tick as usize == t)
                        .unwrap_or_else(|| panic!("no arrival record for node {node} tick {t}"));
                    let total: u64 = rec.sources.iter().map(|&(_, c)| c).sum();
                    assert_eq!(total, series.infected(t, node));
                }
            }
        }
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let net = star_network(4, 0.07);
        let config = SimConfig {
            beta: 0.5,
            max_ticks: 120,
            rng_seed: 21,
            ..Default::default()
        };
        let (series, log) = run(&net, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        log.save_csv(&path).unwrap();
        let loaded = GroundTruthLog::load_csv(&path, &series).unwrap();
        assert_eq!(loaded.moves, log.moves);
        assert_eq!(loaded.first_arrivals, log.first_arrivals);
    }

    #[test]
    fn seed_node_out_of_range_rejected() {
        let net = star_network(2, 0.1);
        let config = SimConfig {
            seed_node: 10,
            ..Default::default()
        };
        assert!(matches!(run(&net, &config), Err(SimError::SeedNodeOutOfRange(10, _))));
    }
}
