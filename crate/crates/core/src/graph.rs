//! Core network data model, validation, and file I/O.
//!
//! A [`MetapopNetwork`] is a directed weighted graph of subpopulations: each
//! node carries a resident population size and each arc a per-capita daily
//! diffusion rate. Networks are immutable after construction and safe to
//! share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node identifier in `0..node_count`.
pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("network validation failed: {0:?}")]
    Validation(Vec<Violation>),
    #[error("node id {0} out of range for {1} nodes")]
    NodeOutOfRange(u64, usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

/// One violated network invariant, reported by [`MetapopNetwork::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// An edge from a node to itself.
    SelfLoop { node: NodeId },
    /// More than one edge between the same ordered pair.
    MultiEdge { src: NodeId, dst: NodeId },
    /// Rate outside [0, 1).
    RateOutOfRange { src: NodeId, dst: NodeId, rate: f64 },
    /// Out-rates sum to >= 1, leaving no residence mass.
    NoResidenceMass { node: NodeId, total_rate: f64 },
    /// Population below one person.
    EmptyPopulation { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { node } => write!(f, "self-loop forbidden at node {node}"),
            Violation::MultiEdge { src, dst } => {
                write!(f, "multiple edges forbidden between {src} and {dst}")
            }
            Violation::RateOutOfRange { src, dst, rate } => {
                write!(f, "rate {rate} on edge {src}->{dst} outside [0,1)")
            }
            Violation::NoResidenceMass { node, total_rate } => {
                write!(f, "no residence mass at node {node} (out-rates sum to {total_rate})")
            }
            Violation::EmptyPopulation { node } => write!(f, "population of node {node} below 1"),
        }
    }
}

/// Directed weighted metapopulation network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetapopNetwork {
    populations: Vec<u64>,
    /// Out-adjacency, sorted by neighbor id. Duplicates and self-loops can be
    /// represented so that `validate` can report them.
    adjacency: Vec<Vec<(NodeId, f64)>>,
    directed: bool,
}

impl MetapopNetwork {
    /// Build a network from populations and directed arcs. Node references
    /// must be in range; all other invariants are checked by [`validate`].
    pub fn from_parts(
        populations: Vec<u64>,
        arcs: &[(NodeId, NodeId, f64)],
        directed: bool,
    ) -> Result<Self, GraphError> {
        let n = populations.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(src, dst, rate) in arcs {
            if src as usize >= n {
                return Err(GraphError::NodeOutOfRange(src as u64, n));
            }
            if dst as usize >= n {
                return Err(GraphError::NodeOutOfRange(dst as u64, n));
            }
            adjacency[src as usize].push((dst, rate));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(dst, _)| dst);
        }
        Ok(Self {
            populations,
            adjacency,
            directed,
        })
    }

    /// Build and validate, returning an error listing every violation.
    pub fn new(
        populations: Vec<u64>,
        arcs: &[(NodeId, NodeId, f64)],
        directed: bool,
    ) -> Result<Self, GraphError> {
        let net = Self::from_parts(populations, arcs, directed)?;
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(GraphError::Validation(violations))
        }
    }

    /// Check every type invariant; an empty report means the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        for (i, &pop) in self.populations.iter().enumerate() {
            if pop < 1 {
                report.push(Violation::EmptyPopulation { node: i as NodeId });
            }
        }
        for (i, list) in self.adjacency.iter().enumerate() {
            let node = i as NodeId;
            let mut total = 0.0f64;
            for (idx, &(dst, rate)) in list.iter().enumerate() {
                if dst == node {
                    report.push(Violation::SelfLoop { node });
                }
                if idx > 0 && list[idx - 1].0 == dst {
                    report.push(Violation::MultiEdge { src: node, dst });
                }
                if !(0.0..1.0).contains(&rate) || !rate.is_finite() {
                    report.push(Violation::RateOutOfRange { src: node, dst, rate });
                }
                total += rate;
            }
            if !list.is_empty() && total >= 1.0 {
                report.push(Violation::NoResidenceMass { node, total_rate: total });
            }
        }
        report
    }

    pub fn node_count(&self) -> usize {
        self.populations.len()
    }

    pub fn population(&self, node: NodeId) -> u64 {
        self.populations[node as usize]
    }

    pub fn populations(&self) -> &[u64] {
        &self.populations
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Out-edges of `node`, sorted by destination id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node as usize]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.adjacency[node as usize].len()
    }

    /// Total outbound rate of `node`.
    pub fn out_rate_sum(&self, node: NodeId) -> f64 {
        self.adjacency[node as usize].iter().map(|&(_, r)| r).sum()
    }

    /// Rate of arc `src -> dst`, if present.
    pub fn rate(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        let list = &self.adjacency[src as usize];
        list.binary_search_by_key(&dst, |&(d, _)| d)
            .ok()
            .map(|idx| list[idx].1)
    }

    /// In-neighbor lists, derived in one pass over all arcs.
    pub fn in_neighbors(&self) -> Vec<Vec<NodeId>> {
        let mut incoming = vec![Vec::new(); self.node_count()];
        for (src, list) in self.adjacency.iter().enumerate() {
            for &(dst, _) in list {
                incoming[dst as usize].push(src as NodeId);
            }
        }
        for list in &mut incoming {
            list.sort_unstable();
        }
        incoming
    }

    /// All arcs in (src, dst) order.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(src, list)| list.iter().map(move |&(dst, r)| (src as NodeId, dst, r)))
    }

    /// Whether every node can reach every other along arcs (ignoring rates).
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let incoming = self.in_neighbors();
        while let Some(v) = stack.pop() {
            for &(dst, _) in self.neighbors(v) {
                if !seen[dst as usize] {
                    seen[dst as usize] = true;
                    stack.push(dst);
                }
            }
            for &src in &incoming[v as usize] {
                if !seen[src as usize] {
                    seen[src as usize] = true;
                    stack.push(src);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Write the line-oriented network file format.
    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# metapopulation network")?;
        writeln!(out, "nodes {}", self.node_count())?;
        if !self.directed {
            writeln!(out, "undirected")?;
        }
        for (i, &pop) in self.populations.iter().enumerate() {
            writeln!(out, "node {i} {pop}")?;
        }
        for (src, dst, rate) in self.arcs() {
            if !self.directed && src > dst {
                continue;
            }
            writeln!(out, "edge {src} {dst} {rate}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load and validate a network file.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);

        let mut node_count: Option<usize> = None;
        let mut directed = true;
        let mut node_lines: Vec<(usize, String, u64)> = Vec::new();
        let mut edge_lines: Vec<(usize, String, String, f64)> = Vec::new();

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match fields[0] {
                "nodes" => {
                    let n = parse_field(fields.get(1), line_no, "node count")?;
                    node_count = Some(n);
                }
                "undirected" => directed = false,
                "node" => {
                    if fields.len() != 3 {
                        return Err(parse_err(line_no, "expected `node <id> <population>`"));
                    }
                    let pop = parse_field(fields.get(2), line_no, "population")?;
                    node_lines.push((line_no, fields[1].to_string(), pop));
                }
                "edge" => {
                    if fields.len() != 4 {
                        return Err(parse_err(line_no, "expected `edge <src> <dst> <rate>`"));
                    }
                    let rate = parse_field(fields.get(3), line_no, "rate")?;
                    edge_lines.push((line_no, fields[1].to_string(), fields[2].to_string(), rate));
                }
                other => {
                    return Err(parse_err(line_no, &format!("unknown directive `{other}`")));
                }
            }
        }

        let n = node_count.ok_or_else(|| parse_err(0, "missing `nodes <n>` header"))?;
        if node_lines.len() != n {
            return Err(GraphError::Format(format!(
                "header declares {n} nodes but {} node lines present",
                node_lines.len()
            )));
        }

        let labels = label_mapping(&node_lines)?;
        let mut populations = vec![0u64; n];
        for (line_no, label, pop) in &node_lines {
            let id = *labels
                .get(label.as_str())
                .ok_or_else(|| parse_err(*line_no, "unmapped node label"))?;
            populations[id as usize] = *pop;
        }

        let mut arcs = Vec::with_capacity(edge_lines.len() * 2);
        for (line_no, src, dst, rate) in &edge_lines {
            let s = *labels
                .get(src.as_str())
                .ok_or_else(|| parse_err(*line_no, &format!("unknown node label `{src}`")))?;
            let d = *labels
                .get(dst.as_str())
                .ok_or_else(|| parse_err(*line_no, &format!("unknown node label `{dst}`")))?;
            arcs.push((s, d, *rate));
            if !directed {
                arcs.push((d, s, *rate));
            }
        }

        let net = Self::from_parts(populations, &arcs, directed)?;
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(GraphError::Validation(violations))
        }
    }
}

/// Map node labels to dense ids. Labels that already form `0..n-1` keep their
/// numeric identity; anything else is assigned by stable lexicographic order.
fn label_mapping<'a>(
    node_lines: &'a [(usize, String, u64)],
) -> Result<BTreeMap<&'a str, NodeId>, GraphError> {
    let n = node_lines.len();
    let numeric: Option<Vec<usize>> = node_lines
        .iter()
        .map(|(_, label, _)| label.parse::<usize>().ok().filter(|&v| v < n))
        .collect();
    let mut map = BTreeMap::new();
    if let Some(ids) = numeric {
        let mut seen = vec![false; n];
        let mut dense = true;
        for &id in &ids {
            if seen[id] {
                dense = false;
                break;
            }
            seen[id] = true;
        }
        if dense {
            for ((_, label, _), id) in node_lines.iter().zip(ids) {
                map.insert(label.as_str(), id as NodeId);
            }
            return Ok(map);
        }
    }
    let mut labels: Vec<&str> = node_lines.iter().map(|(_, l, _)| l.as_str()).collect();
    labels.sort_unstable();
    for window in labels.windows(2) {
        if window[0] == window[1] {
            return Err(GraphError::Format(format!("duplicate node label `{}`", window[0])));
        }
    }
    for (id, label) in labels.into_iter().enumerate() {
        map.insert(label, id as NodeId);
    }
    Ok(map)
}

fn parse_err(line: usize, message: &str) -> GraphError {
    GraphError::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&&str>,
    line: usize,
    what: &str,
) -> Result<T, GraphError> {
    field
        .ok_or_else(|| parse_err(line, &format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, &format!("invalid {what}")))
}

/// Per-tick infected counts for every subpopulation.
///
/// Row 0 encodes the initial condition; row `t` is the state after both the
/// reaction and diffusion substeps of tick `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveillanceSeries {
    node_count: usize,
    counts: Vec<u64>,
    populations: Option<Vec<u64>>,
}

impl SurveillanceSeries {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            counts: Vec::new(),
            populations: None,
        }
    }

    pub fn push_row(&mut self, row: &[u64]) {
        assert_eq!(row.len(), self.node_count);
        self.counts.extend_from_slice(row);
    }

    pub fn push_population_row(&mut self, row: &[u64]) {
        assert_eq!(row.len(), self.node_count);
        self.populations
            .get_or_insert_with(Vec::new)
            .extend_from_slice(row);
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn ticks(&self) -> usize {
        if self.node_count == 0 {
            0
        } else {
            self.counts.len() / self.node_count
        }
    }

    /// Infected count of `node` at the end of tick `t`.
    pub fn infected(&self, tick: usize, node: NodeId) -> u64 {
        self.counts[tick * self.node_count + node as usize]
    }

    pub fn row(&self, tick: usize) -> &[u64] {
        &self.counts[tick * self.node_count..(tick + 1) * self.node_count]
    }

    pub fn population_at(&self, tick: usize, node: NodeId) -> Option<u64> {
        self.populations
            .as_ref()
            .map(|p| p[tick * self.node_count + node as usize])
    }

    /// Check count bounds against population snapshots when present.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        if let Some(pops) = &self.populations {
            for (idx, (&i, &n)) in self.counts.iter().zip(pops).enumerate() {
                if i > n {
                    let tick = idx / self.node_count;
                    let node = idx % self.node_count;
                    report.push(format!(
                        "infected count {i} exceeds population {n} at tick {tick}, node {node}"
                    ));
                }
            }
        }
        report
    }

    /// Write the sparse surveillance CSV: header `t,node,I`, a full row set at
    /// t=0, then one row per (tick, node) whose count is nonzero or changed.
    pub fn save_csv(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,node,I")?;
        for node in 0..self.node_count {
            writeln!(out, "0,{node},{}", self.row(0)[node])?;
        }
        for tick in 1..self.ticks() {
            let prev = self.row(tick - 1);
            let row = self.row(tick);
            for node in 0..self.node_count {
                if row[node] != 0 || row[node] != prev[node] {
                    writeln!(out, "{tick},{node},{}", row[node])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Load the sparse surveillance CSV; absent rows decode to zero.
    pub fn load_csv(path: &Path) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut rows: Vec<(usize, usize, u64)> = Vec::new();
        let mut max_tick = 0usize;
        let mut max_node = 0usize;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if line_no == 1 {
                if trimmed != "t,node,I" {
                    return Err(parse_err(line_no, "expected header `t,node,I`"));
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(line_no, "expected `t,node,I`"));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, "invalid tick"))?;
            let node: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(line_no, "invalid node"))?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(line_no, "invalid count"))?;
            max_tick = max_tick.max(t);
            max_node = max_node.max(node);
            rows.push((t, node, count));
        }
        if rows.is_empty() {
            return Err(GraphError::Format("empty surveillance file".to_string()));
        }
        let node_count = max_node + 1;
        let mut counts = vec![0u64; (max_tick + 1) * node_count];
        for (t, node, count) in rows {
            counts[t * node_count + node] = count;
        }
        Ok(Self {
            node_count,
            counts,
            populations: None,
        })
    }
}
