//! Packing of circuit graphs into one block-diagonal batch: node features
//! stacked into a single matrix so each layer runs one matrix product,
//! with per-node in-neighbor lists and a node-to-graph membership map.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graphenc::CircuitGraph;

#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// Stacked node features, (total_nodes x node_dim).
    pub x: Array2<f64>,
    /// Stacked global features, (graphs x global_dim).
    pub globals: Array2<f64>,
    /// Per node: itself first, then the sources of its incoming edges in
    /// record order (attention neighborhoods include self).
    pub in_neighbors: Vec<Vec<usize>>,
    /// Node index -> graph index.
    pub graph_of: Vec<usize>,
    /// Graph index -> [start, end) node range.
    pub node_ranges: Vec<(usize, usize)>,
    /// Labels where present.
    pub labels: Vec<Option<f64>>,
}

impl GraphBatch {
    pub fn assemble(records: &[&CircuitGraph]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("cannot batch zero graphs"));
        }
        let node_dim = records[0].nodes.first().map(|r| r.len()).unwrap_or(0);
        let global_dim = records[0].global.len();
        let total: usize = records.iter().map(|r| r.nodes.len()).sum();

        let mut x = Array2::zeros((total, node_dim));
        let mut globals = Array2::zeros((records.len(), global_dim));
        let mut in_neighbors: Vec<Vec<usize>> = Vec::with_capacity(total);
        let mut graph_of = Vec::with_capacity(total);
        let mut node_ranges = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());

        let mut offset = 0usize;
        for (g, rec) in records.iter().enumerate() {
            if rec.nodes.is_empty() {
                return Err(Error::validation(format!("graph {} has no nodes", rec.id)));
            }
            for (i, row) in rec.nodes.iter().enumerate() {
                if row.len() != node_dim {
                    return Err(Error::validation(format!(
                        "graph {}: inconsistent node feature width",
                        rec.id
                    )));
                }
                for (j, &v) in row.iter().enumerate() {
                    x[(offset + i, j)] = v;
                }
                in_neighbors.push(vec![offset + i]);
                graph_of.push(g);
            }
            for e in &rec.edges {
                in_neighbors[offset + e[1]].push(offset + e[0]);
            }
            for (j, &v) in rec.global.iter().enumerate() {
                globals[(g, j)] = v;
            }
            node_ranges.push((offset, offset + rec.nodes.len()));
            labels.push(rec.expr);
            offset += rec.nodes.len();
        }
        Ok(GraphBatch { x, globals, in_neighbors, graph_of, node_ranges, labels })
    }

    pub fn n_graphs(&self) -> usize {
        self.node_ranges.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.graph_of.len()
    }

    /// Labels of every graph; error if any is missing.
    pub fn require_labels(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .map(|l| l.ok_or_else(|| Error::validation("record is missing its label")))
            .collect()
    }
}
