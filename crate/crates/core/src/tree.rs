//! Invasion pathway trees: time-stamped edge lists for identified pathways,
//! plain arborescences for the baseline builders.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, NodeId};

/// One directed source -> destination edge of a pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeEdge {
    /// Tick of the invasion; `None` for static baseline trees.
    pub tick: Option<u32>,
    pub src: NodeId,
    pub dst: NodeId,
}

/// A set of directed invasion edges, optionally time-stamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayTree {
    pub root: Option<NodeId>,
    pub edges: Vec<TreeEdge>,
}

impl PathwayTree {
    pub fn new(root: Option<NodeId>) -> Self {
        Self {
            root,
            edges: Vec::new(),
        }
    }

    pub fn edge_pairs(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    /// True when the edge set forms an arborescence out of `root`: one
    /// incoming edge per non-root node and no cycles.
    pub fn is_arborescence(&self) -> bool {
        let Some(root) = self.root else { return false };
        let mut parents: std::collections::BTreeMap<NodeId, NodeId> = Default::default();
        for e in &self.edges {
            if e.dst == root || parents.insert(e.dst, e.src).is_some() {
                return false;
            }
        }
        // Walk each node to the root; a cycle or dangling parent fails.
        for &start in parents.keys() {
            let mut hops = 0usize;
            let mut cur = start;
            while cur != root {
                match parents.get(&cur) {
                    Some(&p) => cur = p,
                    None => return false,
                }
                hops += 1;
                if hops > parents.len() {
                    return false;
                }
            }
        }
        true
    }

    /// Write the baseline tree CSV: a comment naming the method, then
    /// `src,dst` rows.
    pub fn save_csv(&self, path: &Path, method_header: &str) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# {method_header}")?;
        writeln!(out, "src,dst")?;
        let mut edges = self.edges.clone();
        edges.sort();
        for e in edges {
            writeln!(out, "{},{}", e.src, e.dst)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == "src,dst" {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 2 {
                return Err(GraphError::Parse {
                    line: idx + 1,
                    message: "expected `src,dst`".to_string(),
                });
            }
            let src = fields[0].parse().map_err(|_| GraphError::Parse {
                line: idx + 1,
                message: "invalid src".to_string(),
            })?;
            let dst = fields[1].parse().map_err(|_| GraphError::Parse {
                line: idx + 1,
                message: "invalid dst".to_string(),
            })?;
            edges.push(TreeEdge {
                tick: None,
                src,
                dst,
            });
        }
        Ok(Self { root: None, edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arborescence_check() {
        let mut tree = PathwayTree::new(Some(0));
        tree.edges.push(TreeEdge { tick: None, src: 0, dst: 1 });
        tree.edges.push(TreeEdge { tick: None, src: 1, dst: 2 });
        assert!(tree.is_arborescence());

        tree.edges.push(TreeEdge { tick: None, src: 0, dst: 2 });
        assert!(!tree.is_arborescence(), "double parent");
    }

    #[test]
    fn cycle_is_rejected() {
        let mut tree = PathwayTree::new(Some(0));
        tree.edges.push(TreeEdge { tick: None, src: 1, dst: 2 });
        tree.edges.push(TreeEdge { tick: None, src: 2, dst: 1 });
        assert!(!tree.is_arborescence());
    }

    #[test]
    fn csv_round_trip_pairs() {
        let mut tree = PathwayTree::new(Some(0));
        tree.edges.push(TreeEdge { tick: Some(3), src: 0, dst: 2 });
        tree.edges.push(TreeEdge { tick: Some(5), src: 2, dst: 1 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.csv");
        tree.save_csv(&path, "method=test").unwrap();
        let loaded = PathwayTree::load_csv(&path).unwrap();
        assert_eq!(loaded.edge_pairs(), tree.edge_pairs());
    }
}
