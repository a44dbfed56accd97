//! Invasion anatomy: detect invasion events in surveillance data, partition
//! each event into connected invasion cases, and classify the observability
//! of the surrounding subpopulations and edges.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MetapopNetwork, NodeId, SurveillanceSeries};

#[derive(Debug, Error)]
pub enum AnatomyError {
    #[error("inconsistent surveillance: node {node} newly infected at tick {tick} has no infected in-neighbor")]
    NoSource { tick: u32, node: NodeId },
    #[error("surveillance has {series} nodes but network has {network}")]
    NodeCountMismatch { series: usize, network: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// All new contaminations occurring at one epidemic arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvasionEvent {
    pub tick: u32,
    /// Nodes with I(t-1) = 0 and I(t) > 0, sorted.
    pub new_nodes: Vec<NodeId>,
    /// Previously infected in-neighbors of the new nodes, sorted.
    pub infected_neighbors: Vec<NodeId>,
    /// Arrival counts H_j = I_j(t) per new node.
    pub arrivals: BTreeMap<NodeId, u64>,
}

/// The four invasion case classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseClass {
    #[serde(rename = "I->S")]
    SingleToSingle,
    #[serde(rename = "I->nS")]
    SingleToMany,
    #[serde(rename = "mI->S")]
    ManyToSingle,
    #[serde(rename = "mI->nS")]
    ManyToMany,
}

impl CaseClass {
    pub fn of(sources: usize, destinations: usize) -> Self {
        match (sources > 1, destinations > 1) {
            (false, false) => CaseClass::SingleToSingle,
            (false, true) => CaseClass::SingleToMany,
            (true, false) => CaseClass::ManyToSingle,
            (true, true) => CaseClass::ManyToMany,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CaseClass::SingleToSingle => "I->S",
            CaseClass::SingleToMany => "I->nS",
            CaseClass::ManyToSingle => "mI->S",
            CaseClass::ManyToMany => "mI->nS",
        }
    }

    /// Classes with a single possible source require no estimation.
    pub fn is_forced(&self) -> bool {
        matches!(self, CaseClass::SingleToSingle | CaseClass::SingleToMany)
    }
}

/// One connected component of an invasion event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvasionCase {
    pub tick: u32,
    /// Source set (infected side), sorted.
    pub sources: Vec<NodeId>,
    /// Destination set (newly infected side), sorted.
    pub destinations: Vec<NodeId>,
    /// Network edges from sources into destinations, sorted by (src, dst).
    pub invasion_edges: Vec<(NodeId, NodeId)>,
    /// Arrival counts parallel to `destinations`.
    pub arrivals: Vec<u64>,
    pub class: CaseClass,
}

impl InvasionCase {
    pub fn arrival_of(&self, dst: NodeId) -> Option<u64> {
        self.destinations
            .iter()
            .position(|&d| d == dst)
            .map(|i| self.arrivals[i])
    }

    /// Sources with an invasion edge into `dst` (the set Y_dst), in order.
    pub fn sources_of(&self, dst: NodeId) -> Vec<NodeId> {
        self.invasion_edges
            .iter()
            .filter(|&&(_, d)| d == dst)
            .map(|&(s, _)| s)
            .collect()
    }

    /// Destinations reachable from `src` (the set U_src), in order.
    pub fn destinations_of(&self, src: NodeId) -> Vec<NodeId> {
        self.invasion_edges
            .iter()
            .filter(|&&(s, _)| s == src)
            .map(|&(_, d)| d)
            .collect()
    }
}

/// Status transition of a subpopulation over the event tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "S->I")]
    StoI,
    #[serde(rename = "I->S")]
    ItoS,
    #[serde(rename = "S->S")]
    StoS,
}

/// Observability level of a subpopulation during a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeObservability {
    Observable { transition: Transition },
    PartiallyObservable { drop: u64 },
    Unobservable,
}

/// Class of an edge emanating from a source subpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeClass {
    Invasion,
    Observable,
    PartiallyObservable,
    Unobservable,
}

/// Node and edge observability for one invasion case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityView {
    /// Class of every node adjacent to the case (sources, destinations, and
    /// all out-neighbors of sources).
    pub nodes: BTreeMap<NodeId, NodeObservability>,
    /// Class of every edge out of every source.
    pub edges: BTreeMap<(NodeId, NodeId), EdgeClass>,
}

impl ObservabilityView {
    pub fn node(&self, id: NodeId) -> NodeObservability {
        self.nodes[&id]
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> EdgeClass {
        self.edges[&(src, dst)]
    }
}

/// Classify one node's transition from I(t-1) to I(t).
pub fn classify_node(i_prev: u64, i_now: u64) -> NodeObservability {
    if i_prev == 0 {
        if i_now > 0 {
            NodeObservability::Observable {
                transition: Transition::StoI,
            }
        } else {
            NodeObservability::Observable {
                transition: Transition::StoS,
            }
        }
    } else if i_now == 0 {
        NodeObservability::Observable {
            transition: Transition::ItoS,
        }
    } else if i_now < i_prev {
        NodeObservability::PartiallyObservable {
            drop: i_prev - i_now,
        }
    } else {
        NodeObservability::Unobservable
    }
}

/// Detect every invasion event in a surveillance series: one event per tick
/// at which at least one node flips from zero to positive infected count.
/// Reversion epochs come out naturally because a reverted node shows
/// I(t-1) = 0 again.
pub fn detect_events(
    series: &SurveillanceSeries,
    network: &MetapopNetwork,
) -> Result<Vec<InvasionEvent>, AnatomyError> {
    if series.node_count() != network.node_count() {
        return Err(AnatomyError::NodeCountMismatch {
            series: series.node_count(),
            network: network.node_count(),
        });
    }
    let incoming = network.in_neighbors();
    let mut events = Vec::new();
    for t in 1..series.ticks() {
        let prev = series.row(t - 1);
        let now = series.row(t);
        let mut new_nodes = Vec::new();
        for node in 0..series.node_count() {
            if prev[node] == 0 && now[node] > 0 {
                new_nodes.push(node as NodeId);
            }
        }
        if new_nodes.is_empty() {
            continue;
        }
        let mut infected_neighbors = BTreeSet::new();
        let mut arrivals = BTreeMap::new();
        for &j in &new_nodes {
            let mut found = false;
            for &src in &incoming[j as usize] {
                if prev[src as usize] > 0 {
                    infected_neighbors.insert(src);
                    found = true;
                }
            }
            if !found {
                return Err(AnatomyError::NoSource {
                    tick: t as u32,
                    node: j,
                });
            }
            arrivals.insert(j, now[j as usize]);
        }
        events.push(InvasionEvent {
            tick: t as u32,
            new_nodes,
            infected_neighbors: infected_neighbors.into_iter().collect(),
            arrivals,
        });
    }
    Ok(events)
}

/// Partition an event into invasion cases: connected components of the
/// bipartite graph linking newly infected nodes to their previously infected
/// in-neighbors. Adjacency between two infected nodes does not merge cases
/// unless they share a new node. The output is independent of traversal
/// order; cases are sorted by their smallest destination.
pub fn invasion_partition(event: &InvasionEvent, network: &MetapopNetwork) -> Vec<InvasionCase> {
    let incoming = network.in_neighbors();
    let new_set: BTreeSet<NodeId> = event.new_nodes.iter().copied().collect();
    let infected_set: BTreeSet<NodeId> = event.infected_neighbors.iter().copied().collect();

    // Bipartite adjacency via invasion edges.
    let mut sources_of: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut dests_of: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &j in &event.new_nodes {
        for &i in &incoming[j as usize] {
            if infected_set.contains(&i) {
                sources_of.entry(j).or_default().push(i);
                dests_of.entry(i).or_default().push(j);
            }
        }
    }

    let mut cases = Vec::new();
    let mut visited_new: BTreeSet<NodeId> = BTreeSet::new();
    for &start in &event.new_nodes {
        if visited_new.contains(&start) {
            continue;
        }
        let mut dest_set = BTreeSet::new();
        let mut source_set = BTreeSet::new();
        let mut queue = vec![start];
        visited_new.insert(start);
        while let Some(j) = queue.pop() {
            dest_set.insert(j);
            for &i in sources_of.get(&j).into_iter().flatten() {
                if source_set.insert(i) {
                    for &j2 in dests_of.get(&i).into_iter().flatten() {
                        if new_set.contains(&j2) && visited_new.insert(j2) {
                            queue.push(j2);
                        }
                    }
                }
            }
        }
        let destinations: Vec<NodeId> = dest_set.into_iter().collect();
        let sources: Vec<NodeId> = source_set.into_iter().collect();
        let mut invasion_edges = Vec::new();
        for &i in &sources {
            for &j in dests_of.get(&i).into_iter().flatten() {
                invasion_edges.push((i, j));
            }
        }
        invasion_edges.sort_unstable();
        invasion_edges.dedup();
        let arrivals: Vec<u64> = destinations.iter().map(|d| event.arrivals[d]).collect();
        let class = CaseClass::of(sources.len(), destinations.len());
        cases.push(InvasionCase {
            tick: event.tick,
            sources,
            destinations,
            invasion_edges,
            arrivals,
            class,
        });
    }
    cases.sort_by_key(|c| c.destinations[0]);
    cases
}

/// Classify every node adjacent to the case and every edge out of its
/// sources. Node classes follow the I-count transition between t-1 and t;
/// edge classes follow the destination node's class, with edges into the
/// case's destination set labelled invasion edges.
pub fn classify_observability(
    case: &InvasionCase,
    series: &SurveillanceSeries,
    network: &MetapopNetwork,
) -> ObservabilityView {
    let t = case.tick as usize;
    let prev = series.row(t - 1);
    let now = series.row(t);
    let dest_set: BTreeSet<NodeId> = case.destinations.iter().copied().collect();

    let mut nodes = BTreeMap::new();
    let classify = |id: NodeId, nodes: &mut BTreeMap<NodeId, NodeObservability>| {
        nodes
            .entry(id)
            .or_insert_with(|| classify_node(prev[id as usize], now[id as usize]));
    };
    for &i in &case.sources {
        classify(i, &mut nodes);
    }
    for &j in &case.destinations {
        classify(j, &mut nodes);
    }
    for &i in &case.sources {
        for &(dst, _) in network.neighbors(i) {
            classify(dst, &mut nodes);
        }
    }

    let mut edges = BTreeMap::new();
    for &i in &case.sources {
        for &(dst, _) in network.neighbors(i) {
            let class = if dest_set.contains(&dst) {
                EdgeClass::Invasion
            } else {
                match nodes[&dst] {
                    NodeObservability::Observable { transition } => match transition {
                        Transition::ItoS | Transition::StoS => EdgeClass::Observable,
                        // A newly infected neighbor outside the destination
                        // set belongs to another case and cannot share this
                        // source on consistent data; treat its edge as
                        // unobservable rather than leak information.
                        Transition::StoI => EdgeClass::Unobservable,
                    },
                    NodeObservability::PartiallyObservable { .. } => EdgeClass::PartiallyObservable,
                    NodeObservability::Unobservable => EdgeClass::Unobservable,
                }
            };
            edges.insert((i, dst), class);
        }
    }
    ObservabilityView { nodes, edges }
}

/// Serializable record for the JSON-lines case dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: usize,
    pub tick: u32,
    pub class: String,
    pub sources: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    pub invasion_edges: Vec<(NodeId, NodeId)>,
    pub arrivals: Vec<u64>,
    pub node_observability: BTreeMap<NodeId, NodeObservability>,
    pub edge_classes: Vec<((NodeId, NodeId), EdgeClass)>,
}

impl CaseRecord {
    pub fn new(case_id: usize, case: &InvasionCase, view: &ObservabilityView) -> Self {
        Self {
            case_id,
            tick: case.tick,
            class: case.class.label().to_string(),
            sources: case.sources.clone(),
            destinations: case.destinations.clone(),
            invasion_edges: case.invasion_edges.clone(),
            arrivals: case.arrivals.clone(),
            node_observability: view.nodes.clone(),
            edge_classes: view.edges.iter().map(|(&k, &v)| (k, v)).collect(),
        }
    }
}

/// Write one JSON object per case.
pub fn write_cases_jsonl(records: &[CaseRecord], path: &Path) -> Result<(), AnatomyError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        let line = serde_json::to_string(record).expect("case record serializes");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build a series directly from dense rows.
    fn series_of(rows: &[&[u64]]) -> SurveillanceSeries {
        let mut s = SurveillanceSeries::new(rows[0].len());
        for row in rows {
            s.push_row(row);
        }
        s
    }

    fn path_network(n: u32) -> MetapopNetwork {
        let mut arcs = Vec::new();
        for i in 0..n - 1 {
            arcs.push((i, i + 1, 0.1));
            arcs.push((i + 1, i, 0.1));
        }
        MetapopNetwork::new(vec![100; n as usize], &arcs, true).unwrap()
    }

    #[test]
    fn single_new_node_single_event() {
        let net = path_network(3);
        let series = series_of(&[&[5, 0, 0], &[5, 0, 0], &[4, 1, 0]]);
        let events = detect_events(&series, &net).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].tick, 2);
        assert_eq!(events[0].new_nodes, vec![1]);
        assert_eq!(events[0].arrivals[&1], 1);
        assert_eq!(events[0].infected_neighbors, vec![0]);
    }

    #[test]
    fn constant_series_no_events() {
        let net = path_network(3);
        let series = series_of(&[&[5, 0, 0], &[5, 0, 0], &[5, 0, 0]]);
        assert!(detect_events(&series, &net).unwrap().is_empty());
    }

    #[test]
    fn orphan_new_node_is_inconsistent() {
        let net = path_network(3);
        let series = series_of(&[&[5, 0, 0], &[5, 0, 1]]);
        match detect_events(&series, &net) {
            Err(AnatomyError::NoSource { tick: 1, node: 2 }) => {}
            other => panic!("expected NoSource, got {other:?}"),
        }
    }

    #[test]
    fn shared_source_merges_into_one_event_and_case() {
        // star: 0 in the middle, leaves 1 and 2 turn positive together
        let net = MetapopNetwork::new(
            vec![100; 3],
            &[
                (0, 1, 0.1),
                (1, 0, 0.1),
                (0, 2, 0.1),
                (2, 0, 0.1),
            ],
            true,
        )
        .unwrap();
        let series = series_of(&[&[5, 0, 0], &[3, 1, 1]]);
        let events = detect_events(&series, &net).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].new_nodes, vec![1, 2]);
        let cases = invasion_partition(&events[0], &net);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].class, CaseClass::SingleToMany);
        assert_eq!(cases[0].invasion_edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn disjoint_sources_split_into_two_cases() {
        // 0-1 and 2-3 independent pairs; 1 and 3 invaded same tick.
        let net = MetapopNetwork::new(
            vec![100; 4],
            &[
                (0, 1, 0.1),
                (1, 0, 0.1),
                (2, 3, 0.1),
                (3, 2, 0.1),
            ],
            true,
        )
        .unwrap();
        let series = series_of(&[&[5, 0, 5, 0], &[5, 2, 4, 1]]);
        let events = detect_events(&series, &net).unwrap();
        assert_eq!(events.len(), 1);
        let cases = invasion_partition(&events[0], &net);
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].class, CaseClass::SingleToSingle);
        assert_eq!(cases[0].destinations, vec![1]);
        assert_eq!(cases[0].arrivals, vec![2]);
        assert_eq!(cases[1].destinations, vec![3]);
    }

    #[test]
    fn two_sources_one_destination_is_mi_to_s() {
        // both 0 and 2 infected, both adjacent to 1
        let net = path_network(3);
        let series = series_of(&[&[5, 0, 5], &[5, 2, 5]]);
        let events = detect_events(&series, &net).unwrap();
        let cases = invasion_partition(&events[0], &net);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].class, CaseClass::ManyToSingle);
        assert_eq!(cases[0].sources, vec![0, 2]);
        assert_eq!(cases[0].invasion_edges, vec![(0, 1), (2, 1)]);
    }

    #[test]
    fn partition_covers_and_is_disjoint() {
        let net = MetapopNetwork::new(
            vec![100; 6],
            &[
                (0, 1, 0.1),
                (1, 0, 0.1),
                (0, 2, 0.1),
                (2, 0, 0.1),
                (3, 4, 0.1),
                (4, 3, 0.1),
                (3, 5, 0.1),
                (5, 3, 0.1),
            ],
            true,
        )
        .unwrap();
        let series = series_of(&[&[9, 0, 0, 7, 0, 0], &[5, 1, 2, 3, 1, 3]]);
        let events = detect_events(&series, &net).unwrap();
        let cases = invasion_partition(&events[0], &net);
        let mut all_dests: Vec<NodeId> = cases.iter().flat_map(|c| c.destinations.clone()).collect();
        all_dests.sort_unstable();
        assert_eq!(all_dests, events[0].new_nodes);
        let unique: BTreeSet<NodeId> = all_dests.iter().copied().collect();
        assert_eq!(unique.len(), all_dests.len(), "destinations disjoint");
    }

    #[test]
    fn observability_classes() {
        assert_eq!(
            classify_node(2, 0),
            NodeObservability::Observable {
                transition: Transition::ItoS
            }
        );
        assert_eq!(
            classify_node(3, 1),
            NodeObservability::PartiallyObservable { drop: 2 }
        );
        assert_eq!(classify_node(3, 5), NodeObservability::Unobservable);
        assert_eq!(classify_node(3, 3), NodeObservability::Unobservable);
        assert_eq!(
            classify_node(0, 0),
            NodeObservability::Observable {
                transition: Transition::StoS
            }
        );
        assert_eq!(
            classify_node(0, 4),
            NodeObservability::Observable {
                transition: Transition::StoI
            }
        );
    }

    #[test]
    fn edge_classes_follow_destinations() {
        // 0 and 2 invade 1; node 3 hangs off 0 and empties (I->S); node 4
        // hangs off 2 and keeps infected (unobservable).
        let net = MetapopNetwork::new(
            vec![100; 5],
            &[
                (0, 1, 0.1),
                (1, 0, 0.1),
                (2, 1, 0.1),
                (1, 2, 0.1),
                (0, 3, 0.1),
                (3, 0, 0.1),
                (2, 4, 0.1),
                (4, 2, 0.1),
            ],
            true,
        )
        .unwrap();
        let series = series_of(&[&[5, 0, 5, 2, 1], &[5, 2, 4, 0, 3]]);
        let events = detect_events(&series, &net).unwrap();
        let cases = invasion_partition(&events[0], &net);
        assert_eq!(cases.len(), 1);
        let view = classify_observability(&cases[0], &series, &net);
        assert_eq!(view.edge(0, 1), EdgeClass::Invasion);
        assert_eq!(view.edge(2, 1), EdgeClass::Invasion);
        assert_eq!(view.edge(0, 3), EdgeClass::Observable);
        assert_eq!(view.edge(2, 4), EdgeClass::Unobservable);
        assert_eq!(
            view.node(2),
            NodeObservability::PartiallyObservable { drop: 1 }
        );
    }
}
