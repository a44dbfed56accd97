//! Synthetic metapopulation networks: Barabasi-Albert topology plus a generic
//! degree-driven diffusion model for the travel rates.
//!
//! The rate out of node `i` toward neighbor `j` is
//! `p_ij = C * k_j^theta_i / sum_l k_l^theta_i`, with `theta_i` drawn once per
//! source node from a Gaussian. Every node therefore has total outbound rate
//! exactly `C`. The calibration routine picks the Gaussian parameters so that
//! node traffic scales with degree like `T ~ k^beta'`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MetapopNetwork, NodeId};
use crate::rng::{KeyedRng, Substep};

#[derive(Debug, Error)]
pub enum NetGenError {
    #[error("node_count ({node_count}) must exceed attachment_m ({attachment_m}) and attachment_m must be >= 1")]
    BadAttachment { node_count: usize, attachment_m: usize },
    #[error("mobility constant C must lie in (0,1), got {0}")]
    BadMobilityConstant(f64),
    #[error("theta variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("network error: {0}")]
    Graph(#[from] crate::graph::GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetGenConfig {
    pub node_count: usize,
    /// Edges added per new node during growth.
    pub attachment_m: usize,
    /// Mean of the per-node Gaussian theta.
    pub theta_mean: f64,
    /// Variance of the per-node Gaussian theta.
    pub theta_var: f64,
    /// Total outbound rate per node.
    pub mobility_constant: f64,
    pub initial_population: u64,
    pub seed: u64,
    /// Traffic-degree exponent targeted by calibration.
    pub target_exponent: f64,
    /// Optional population sizing mode N ~ T^lambda, rescaled to preserve the
    /// total population.
    pub population_exponent: Option<f64>,
}

impl Default for NetGenConfig {
    fn default() -> Self {
        Self {
            node_count: 300,
            attachment_m: 8,
            theta_mean: 0.5,
            theta_var: 0.01,
            mobility_constant: 0.1,
            initial_population: 600_000,
            seed: 0,
            target_exponent: 1.5,
            population_exponent: None,
        }
    }
}

impl NetGenConfig {
    pub fn check(&self) -> Result<(), NetGenError> {
        if self.attachment_m < 1 || self.node_count <= self.attachment_m {
            return Err(NetGenError::BadAttachment {
                node_count: self.node_count,
                attachment_m: self.attachment_m,
            });
        }
        if !(0.0..1.0).contains(&self.mobility_constant) || self.mobility_constant <= 0.0 {
            return Err(NetGenError::BadMobilityConstant(self.mobility_constant));
        }
        if self.theta_var < 0.0 {
            return Err(NetGenError::NegativeVariance(self.theta_var));
        }
        Ok(())
    }
}

/// Grow a Barabasi-Albert topology: a complete graph on `attachment_m + 1`
/// nodes, then each new node attaches to `attachment_m` distinct existing
/// nodes chosen proportionally to degree. Rates are left at zero.
pub fn generate_ba_topology(config: &NetGenConfig) -> Result<MetapopNetwork, NetGenError> {
    config.check()?;
    let n = config.node_count;
    let m = config.attachment_m;

    // `stubs` holds one entry per edge endpoint, so uniform sampling from it
    // is degree-proportional sampling.
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(n * m);
    let mut stubs: Vec<NodeId> = Vec::with_capacity(2 * n * m);
    for a in 0..=m {
        for b in (a + 1)..=m {
            edges.push((a as NodeId, b as NodeId));
            stubs.push(a as NodeId);
            stubs.push(b as NodeId);
        }
    }

    for new_node in (m + 1)..n {
        let mut rng = KeyedRng::substep(config.seed, 0, new_node as u64, Substep::Attachment);
        let mut chosen: Vec<NodeId> = Vec::with_capacity(m);
        while chosen.len() < m {
            let pick = stubs[rng.next_below(stubs.len() as u64) as usize];
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
        for target in chosen {
            edges.push((target, new_node as NodeId));
            stubs.push(target);
            stubs.push(new_node as NodeId);
        }
    }

    let mut arcs = Vec::with_capacity(edges.len() * 2);
    for (a, b) in edges {
        arcs.push((a, b, 0.0));
        arcs.push((b, a, 0.0));
    }
    let populations = vec![config.initial_population; n];
    Ok(MetapopNetwork::new(populations, &arcs, false)?)
}

/// Per-node theta draws from N(theta_mean, theta_var).
pub fn draw_thetas(config: &NetGenConfig) -> Vec<f64> {
    let sd = config.theta_var.sqrt();
    (0..config.node_count)
        .map(|node| {
            let mut rng = KeyedRng::substep(config.seed, 1, node as u64, Substep::ThetaDraw);
            config.theta_mean + sd * rng.next_standard_normal()
        })
        .collect()
}

/// Assign diffusion rates over an existing topology. `thetas`, when given,
/// overrides the per-node Gaussian draws.
pub fn assign_diffusion_rates(
    network: &MetapopNetwork,
    config: &NetGenConfig,
    thetas: Option<&[f64]>,
) -> Result<MetapopNetwork, NetGenError> {
    config.check()?;
    let n = network.node_count();
    let drawn;
    let thetas = match thetas {
        Some(t) => t,
        None => {
            drawn = draw_thetas(config);
            &drawn
        }
    };
    assert_eq!(thetas.len(), n);

    let degrees: Vec<usize> = (0..n).map(|i| network.out_degree(i as NodeId)).collect();
    let mut arcs = Vec::new();
    for node in 0..n {
        let theta = thetas[node];
        let neighbors = network.neighbors(node as NodeId);
        if neighbors.is_empty() {
            continue;
        }
        let weights: Vec<f64> = neighbors
            .iter()
            .map(|&(dst, _)| (degrees[dst as usize] as f64).powf(theta))
            .collect();
        let total: f64 = weights.iter().sum();
        for (&(dst, _), w) in neighbors.iter().zip(&weights) {
            arcs.push((node as NodeId, dst, config.mobility_constant * w / total));
        }
    }

    let populations = match config.population_exponent {
        None => network.populations().to_vec(),
        Some(lambda) => {
            // N ~ T^lambda with T from uniform populations, rescaled to keep
            // the original total.
            let base = MetapopNetwork::new(network.populations().to_vec(), &arcs, true)?;
            let traffic = node_traffic(&base);
            let weights: Vec<f64> = traffic.iter().map(|&t| t.max(1.0).powf(lambda)).collect();
            let total_weight: f64 = weights.iter().sum();
            let total_pop: u64 = network.populations().iter().sum();
            weights
                .iter()
                .map(|w| ((w / total_weight) * total_pop as f64).round().max(1.0) as u64)
                .collect()
        }
    };

    Ok(MetapopNetwork::new(populations, &arcs, true)?)
}

/// Generate topology and rates in one step.
pub fn generate(config: &NetGenConfig) -> Result<MetapopNetwork, NetGenError> {
    let topology = generate_ba_topology(config)?;
    assign_diffusion_rates(&topology, config, None)
}

/// Arriving traffic per node: `T_j = sum_l p_lj * N_l`. Under the constant-C
/// rate model the outbound traffic of every node is `C * N`, so node-level
/// traffic heterogeneity lives entirely in the arrivals.
pub fn node_traffic(network: &MetapopNetwork) -> Vec<f64> {
    let mut traffic = vec![0.0f64; network.node_count()];
    for (src, dst, rate) in network.arcs() {
        traffic[dst as usize] += rate * network.population(src) as f64;
    }
    traffic
}

/// Least-squares slope of log T against log k, with nodes binned by degree
/// decile to even out the heavy tail.
pub fn traffic_degree_slope(network: &MetapopNetwork) -> Result<f64, NetGenError> {
    let traffic = node_traffic(network);
    let mut points: Vec<(f64, f64)> = (0..network.node_count())
        .filter(|&i| traffic[i] > 0.0 && network.out_degree(i as NodeId) > 0)
        .map(|i| {
            (
                (network.out_degree(i as NodeId) as f64).ln(),
                traffic[i].ln(),
            )
        })
        .collect();
    if points.is_empty() {
        return Err(NetGenError::Calibration("no usable nodes".to_string()));
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if points.first().unwrap().0 == points.last().unwrap().0 {
        return Err(NetGenError::Calibration(
            "degenerate ensemble: all degrees equal".to_string(),
        ));
    }

    let bins = 10usize.min(points.len());
    let mut xs = Vec::with_capacity(bins);
    let mut ys = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = b * points.len() / bins;
        let hi = ((b + 1) * points.len() / bins).max(lo + 1);
        let chunk = &points[lo..hi.min(points.len())];
        if chunk.is_empty() {
            continue;
        }
        xs.push(chunk.iter().map(|p| p.0).sum::<f64>() / chunk.len() as f64);
        ys.push(chunk.iter().map(|p| p.1).sum::<f64>() / chunk.len() as f64);
    }
    ols_slope(&xs, &ys).ok_or_else(|| {
        NetGenError::Calibration("degenerate ensemble: all degrees equal".to_string())
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Result of a calibration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub theta_mean: f64,
    pub theta_var: f64,
    /// Mean fitted slope across the ensemble at the winning parameters.
    pub slope: f64,
    /// Squared residual against the target exponent.
    pub residual: f64,
}

/// Pick the (theta_mean, theta_var) candidate whose ensemble-mean traffic
/// slope is closest (least squares) to `target_exponent`.
pub fn calibrate_theta(
    topologies: &[MetapopNetwork],
    candidates: &[(f64, f64)],
    config: &NetGenConfig,
) -> Result<Calibration, NetGenError> {
    if topologies.is_empty() || candidates.is_empty() {
        return Err(NetGenError::Calibration(
            "empty ensemble or candidate list".to_string(),
        ));
    }
    let mut best: Option<Calibration> = None;
    for &(theta_mean, theta_var) in candidates {
        let mut slopes = Vec::with_capacity(topologies.len());
        for topology in topologies {
            let candidate_config = NetGenConfig {
                node_count: topology.node_count(),
                theta_mean,
                theta_var,
                ..config.clone()
            };
            let net = assign_diffusion_rates(topology, &candidate_config, None)?;
            slopes.push(traffic_degree_slope(&net)?);
        }
        let slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
        let residual = (slope - config.target_exponent).powi(2);
        let better = match &best {
            None => true,
            Some(b) => residual < b.residual,
        };
        if better {
            best = Some(Calibration {
                theta_mean,
                theta_var,
                slope,
                residual,
            });
        }
    }
    Ok(best.expect("candidates checked non-empty"))
}
