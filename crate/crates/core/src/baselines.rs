//! Baseline tree builders: arrival-time shortest-path tree (ARR),
//! effective-distance tree (EFF), and the Monte-Carlo maximum-likelihood
//! invasion tree (MCML).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{MetapopNetwork, NodeId};
use crate::rng::absorb;
use crate::sim::{self, SimConfig};
use crate::tree::{PathwayTree, TreeEdge};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("seed node {0} out of range for {1} nodes")]
    SeedOutOfRange(NodeId, usize),
    #[error("mcml needs at least one run")]
    NoRuns,
    #[error("simulation failed: {0}")]
    Sim(#[from] sim::SimError),
}

/// Default additive constant of the ARR edge weight.
pub const ARR_ALPHA: f64 = 1.0;

struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap; ties resolved by node id
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("distances are never NaN")
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra arborescence under per-edge weights. Equal-cost paths resolve to
/// the smallest predecessor id, so the tree is deterministic. Unreachable
/// nodes are left out and counted.
fn shortest_path_tree<W>(
    network: &MetapopNetwork,
    seed: NodeId,
    weight: W,
) -> Result<(PathwayTree, usize), BaselineError>
where
    W: Fn(NodeId, NodeId, f64) -> Option<f64>,
{
    let n = network.node_count();
    if seed as usize >= n {
        return Err(BaselineError::SeedOutOfRange(seed, n));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[seed as usize] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: seed,
    });

    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if settled[node as usize] {
            continue;
        }
        settled[node as usize] = true;
        for &(dst, rate) in network.neighbors(node) {
            let Some(w) = weight(node, dst, rate) else {
                continue;
            };
            let candidate = d + w;
            let current = dist[dst as usize];
            if candidate < current {
                dist[dst as usize] = candidate;
                parent[dst as usize] = Some(node);
                heap.push(HeapEntry {
                    dist: candidate,
                    node: dst,
                });
            } else if candidate == current {
                if let Some(p) = parent[dst as usize] {
                    if node < p {
                        parent[dst as usize] = Some(node);
                    }
                }
            }
        }
    }

    let mut tree = PathwayTree::new(Some(seed));
    let mut unreachable = 0usize;
    for node in 0..n {
        if node as NodeId == seed {
            continue;
        }
        match parent[node] {
            Some(p) => tree.edges.push(TreeEdge {
                tick: None,
                src: p,
                dst: node as NodeId,
            }),
            None => unreachable += 1,
        }
    }
    tree.edges.sort();
    Ok((tree, unreachable))
}

/// Arrival-time shortest-path tree: edge weight `alpha - ln(p_ij)`, zero-rate
/// edges excluded.
pub fn arr_tree(
    network: &MetapopNetwork,
    seed: NodeId,
    alpha: f64,
) -> Result<PathwayTree, BaselineError> {
    let (tree, _) = shortest_path_tree(network, seed, |_, _, rate| {
        if rate <= 0.0 {
            None
        } else {
            Some((alpha - rate.ln()).max(f64::MIN_POSITIVE))
        }
    })?;
    Ok(tree)
}

/// Effective-distance tree: edge length `1 - ln(p_ij / sum_l p_il)`.
pub fn eff_tree(network: &MetapopNetwork, seed: NodeId) -> Result<PathwayTree, BaselineError> {
    let out_rate: Vec<f64> = (0..network.node_count())
        .map(|i| network.out_rate_sum(i as NodeId))
        .collect();
    let (tree, _) = shortest_path_tree(network, seed, |src, _, rate| {
        let total = out_rate[src as usize];
        if rate <= 0.0 || total <= 0.0 {
            None
        } else {
            Some(1.0 - (rate / total).ln())
        }
    })?;
    Ok(tree)
}

/// Fraction of runs in which each arc carried a first arrival. Simultaneous
/// sources of one arrival share the credit equally.
pub fn mcml_arrival_frequencies(
    network: &MetapopNetwork,
    config: &SimConfig,
    runs: u32,
) -> Result<Vec<Vec<(NodeId, f64)>>, BaselineError> {
    if runs == 0 {
        return Err(BaselineError::NoRuns);
    }
    let n = network.node_count();
    let per_run: Vec<Vec<(NodeId, NodeId, f64)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let run_config = SimConfig {
                rng_seed: absorb(config.rng_seed, run as u64),
                ..config.clone()
            };
            let (_, log) = sim::run(network, &run_config)?;
            let mut credits = Vec::new();
            for node in 0..n {
                if let Some(first) = log.first_arrivals[node].first() {
                    let share = 1.0 / first.sources.len() as f64;
                    for &(src, _) in &first.sources {
                        credits.push((src, node as NodeId, share));
                    }
                }
            }
            Ok::<_, BaselineError>(credits)
        })
        .collect::<Result<_, _>>()?;

    let mut freq: Vec<std::collections::BTreeMap<NodeId, f64>> = vec![Default::default(); n];
    for credits in per_run {
        for (src, dst, share) in credits {
            *freq[dst as usize].entry(src).or_insert(0.0) += share;
        }
    }
    Ok(freq
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|(src, total)| (src, total / runs as f64))
                .collect()
        })
        .collect())
}

/// Monte-Carlo maximum-likelihood tree: estimate per-arc first-arrival
/// frequencies over independent runs, then build the shortest-path
/// arborescence under `-ln(f_ij + eps)` with `eps = 1/(10 * runs)`.
pub fn mcml_tree(
    network: &MetapopNetwork,
    config: &SimConfig,
    runs: u32,
) -> Result<PathwayTree, BaselineError> {
    let freq = mcml_arrival_frequencies(network, config, runs)?;
    let eps = 1.0 / (10.0 * runs as f64);
    let (tree, _) = shortest_path_tree(network, config.seed_node, |src, dst, _| {
        let f = freq[dst as usize]
            .iter()
            .find(|&&(s, _)| s == src)
            .map(|&(_, f)| f)
            .unwrap_or(0.0);
        Some((-(f + eps).ln()).max(0.0))
    })?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{self, NetGenConfig};

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
    fn star_trees_are_hub_rooted() {
        let net = star_network(5, 0.1);
        let arr = arr_tree(&net, 0, ARR_ALPHA).unwrap();
        let eff = eff_tree(&net, 0).unwrap();
        let expected: Vec<(NodeId, NodeId)> = (1..6).map(|l| (0, l)).collect();
        assert_eq!(arr.edge_pairs().into_iter().collect::<Vec<_>>(), expected);
        assert_eq!(eff.edge_pairs().into_iter().collect::<Vec<_>>(), expected);
        assert!(arr.is_arborescence());
    }

    #[test]
    fn arr_prefers_higher_rate_route() {
        // seed 0; two 2-hop routes to node 3: via 1 (rates 0.2) and via 2
        // (rates 0.1). The 0.2 route wins.
        let net = MetapopNetwork::new(
            vec![100; 4],
            &[
                (0, 1, 0.2),
                (1, 0, 0.2),
                (1, 3, 0.2),
                (3, 1, 0.2),
                (0, 2, 0.1),
                (2, 0, 0.1),
                (2, 3, 0.1),
                (3, 2, 0.1),
            ],
            true,
        )
        .unwrap();
        let arr = arr_tree(&net, 0, ARR_ALPHA).unwrap();
        assert!(arr.edge_pairs().contains(&(1, 3)));
        assert!(!arr.edge_pairs().contains(&(2, 3)));
    }

    #[test]
    fn eff_uniform_rates_is_bfs() {
        // path 0-1-2 plus shortcut 0-2: uniform relative rates mean the
        // one-hop edge wins.
        let net = MetapopNetwork::new(
            vec![100; 3],
            &[
                (0, 1, 0.1),
                (1, 0, 0.1),
                (1, 2, 0.1),
                (2, 1, 0.1),
                (0, 2, 0.1),
                (2, 0, 0.1),
            ],
            true,
        )
        .unwrap();
        let eff = eff_tree(&net, 0).unwrap();
        assert!(eff.edge_pairs().contains(&(0, 2)));
        assert!(eff.edge_pairs().contains(&(0, 1)));
    }

    #[test]
    fn normalization_can_change_the_winner() {
        // Direct arc 0->3 (rate 0.04) versus the route 0->1->3 (rates 0.2),
        // with node 0 also feeding node 2 and node 1 feeding only node 3.
        // ARR (alpha=1): direct costs 1-ln(0.04)=4.22, the route
        // 2*(1-ln 0.2)=5.22, so the direct arc wins.
        // EFF: out-flux of 0 is 0.44 and of 1 is 0.2, so the direct arc
        // costs 1-ln(0.04/0.44)=3.40 while the route costs
        // (1-ln(0.2/0.44)) + (1-ln 1) = 2.79: the route wins.
        let net = MetapopNetwork::new(
            vec![100; 4],
            &[(0, 3, 0.04), (0, 1, 0.2), (0, 2, 0.2), (1, 3, 0.2)],
            true,
        )
        .unwrap();
        let arr = arr_tree(&net, 0, ARR_ALPHA).unwrap();
        let eff = eff_tree(&net, 0).unwrap();
        assert!(arr.edge_pairs().contains(&(0, 3)));
        assert!(eff.edge_pairs().contains(&(1, 3)));
    }

    #[test]
    fn arr_equals_eff_on_constant_outflux_networks() {
        let config = NetGenConfig {
            node_count: 200,
            attachment_m: 4,
            seed: 17,
            ..Default::default()
        };
        let net = netgen::generate(&config).unwrap();
        let arr = arr_tree(&net, 0, ARR_ALPHA).unwrap();
        let eff = eff_tree(&net, 0).unwrap();
        assert_eq!(arr.edge_pairs(), eff.edge_pairs());
    }

    #[test]
    fn zero_rate_edges_excluded() {
        let net = MetapopNetwork::new(
            vec![100; 3],
            &[(0, 1, 0.1), (1, 0, 0.1), (1, 2, 0.0), (2, 1, 0.0)],
            true,
        )
        .unwrap();
        let arr = arr_tree(&net, 0, ARR_ALPHA).unwrap();
        assert_eq!(arr.edges.len(), 1, "node 2 unreachable");
    }

    #[test]
    fn mcml_single_run_reproduces_unique_arrivals() {
        // deterministic-ish chain: rates high enough that invasion follows
        // the chain; with runs=1 frequencies are 0 or 1 and the tree follows
        // that run's arrivals wherever they were unique.
        let net = MetapopNetwork::new(
            vec![500; 3],
            &[(0, 1, 0.2), (1, 0, 0.2), (1, 2, 0.2), (2, 1, 0.2)],
            true,
        )
        .unwrap();
        let config = SimConfig {
            beta: 0.8,
            seed_node: 0,
            rng_seed: 5,
            max_ticks: 100,
            ..Default::default()
        };
        let tree = mcml_tree(&net, &config, 1).unwrap();
        let (_, log) = sim::run(
            &net,
            &SimConfig {
                rng_seed: absorb(config.rng_seed, 0),
                ..config.clone()
            },
        )
        .unwrap();
        for node in 1..3u32 {
            let first = log.first_arrival(node).expect("invaded");
            if first.sources.len() == 1 {
                assert!(tree.edge_pairs().contains(&(first.sources[0].0, node)));
            }
        }
    }

    #[test]
    fn mcml_dominant_route_wins() {
        // two routes 0->1->3 (rate 0.10) and 0->2->3 (rate 0.05): over many
        // runs node 3's first arrival comes through node 1 more often.
        let net = MetapopNetwork::new(
            vec![2000; 4],
            &[
                (0, 1, 0.10),
                (1, 0, 0.10),
                (1, 3, 0.10),
                (3, 1, 0.10),
                (0, 2, 0.05),
                (2, 0, 0.05),
                (2, 3, 0.05),
                (3, 2, 0.05),
            ],
            true,
        )
        .unwrap();
        let config = SimConfig {
            beta: 0.6,
            seed_node: 0,
            rng_seed: 13,
            max_ticks: 200,
            ..Default::default()
        };
        let runs = 400;
        let freq = mcml_arrival_frequencies(&net, &config, runs).unwrap();
        let f13: f64 = freq[3].iter().find(|&&(s, _)| s == 1).map(|&(_, f)| f).unwrap_or(0.0);
        let f23: f64 = freq[3].iter().find(|&&(s, _)| s == 2).map(|&(_, f)| f).unwrap_or(0.0);
        assert!(f13 > f23, "f13={f13} f23={f23}");
        let tree = mcml_tree(&net, &config, runs).unwrap();
        assert!(tree.edge_pairs().contains(&(1, 3)));
    }

    #[test]
    fn mcml_deterministic_given_seed() {
        let net = star_network(4, 0.05);
        let config = SimConfig {
            beta: 0.5,
            rng_seed: 77,
            max_ticks: 80,
            ..Default::default()
        };
        let a = mcml_tree(&net, &config, 20).unwrap();
        let b = mcml_tree(&net, &config, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_trees_are_arborescences() {
        let config = NetGenConfig {
            node_count: 150,
            attachment_m: 3,
            seed: 23,
            ..Default::default()
        };
        let net = netgen::generate(&config).unwrap();
        for tree in [arr_tree(&net, 0, ARR_ALPHA).unwrap(), eff_tree(&net, 0).unwrap()] {
            assert!(tree.is_arborescence());
            assert_eq!(tree.edges.len(), net.node_count() - 1);
        }
    }
}
