//! The 25-joint skeleton graph and its normalized adjacency.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::joints::{self, REDUCED_JOINTS};

/// How the normalized adjacency is split into convolution partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    /// One partition: the whole normalized `A + I`.
    #[default]
    Uniform,
    /// Three partitions by hop distance to the center joint: same distance
    /// (including self loops), closer to center, farther from center.
    Spatial,
}

impl PartitionStrategy {
    pub fn count(self) -> usize {
        match self {
            PartitionStrategy::Uniform => 1,
            PartitionStrategy::Spatial => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    num_nodes: usize,
    /// Undirected bones, each listed once as `(parent, child)`.
    bones: Vec<(usize, usize)>,
    center: usize,
    strategy: PartitionStrategy,
    partitions: Vec<Array2<f64>>,
}

impl SkeletonGraph {
    pub fn from_edges(
        num_nodes: usize,
        bones: Vec<(usize, usize)>,
        center: usize,
        strategy: PartitionStrategy,
    ) -> Result<Self> {
        if num_nodes == 0 || center >= num_nodes {
            return Err(Error::Contract(format!(
                "invalid graph: {num_nodes} nodes, center {center}"
            )));
        }
        if let Some(&(a, b)) = bones.iter().find(|(a, b)| *a >= num_nodes || *b >= num_nodes || a == b) {
            return Err(Error::Contract(format!("invalid bone ({a}, {b})")));
        }
        let mut graph = SkeletonGraph {
            num_nodes,
            bones,
            center,
            strategy,
            partitions: Vec::new(),
        };
        graph.partitions = graph.build_partitions();
        Ok(graph)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn strategy(&self) -> PartitionStrategy {
        self.strategy
    }

    /// Normalized adjacency split per the partition strategy; the partitions
    /// sum to the full normalized matrix.
    pub fn partitions(&self) -> &[Array2<f64>] {
        &self.partitions
    }

    /// Symmetric 0/1 adjacency without self loops.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for &(i, j) in &self.bones {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Hop distance of every node from the center; `None` when unreachable.
    pub fn hop_distances(&self) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.num_nodes];
        dist[self.center] = Some(0);
        let mut queue = VecDeque::from([self.center]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.num_nodes {
                if adj[[u, v]] > 0.0 && dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances().iter().all(Option::is_some)
    }

    fn build_partitions(&self) -> Vec<Array2<f64>> {
        let normalized = normalize_adjacency(self);
        match self.strategy {
            PartitionStrategy::Uniform => vec![normalized],
            PartitionStrategy::Spatial => {
                let hop = self.hop_distances();
                let n = self.num_nodes;
                let mut parts = vec![Array2::zeros((n, n)); 3];
                for i in 0..n {
                    for j in 0..n {
                        let w = normalized[[i, j]];
                        if w == 0.0 {
                            continue;
                        }
                        // column j aggregates neighbour i
                        let k = match (hop[i], hop[j]) {
                            (Some(a), Some(b)) if a < b => 1,
                            (Some(a), Some(b)) if a > b => 2,
                            _ => 0,
                        };
                        parts[k][[i, j]] = w;
                    }
                }
                parts
            }
        }
    }

    /// Stable digest of the partition matrices, recorded in checkpoints.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.num_nodes as u64).to_le_bytes());
        hasher.update([self.strategy.count() as u8]);
        for p in &self.partitions {
            for v in p.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// The reduced 25-joint body graph, centered at the spine chest.
pub fn build_graph() -> SkeletonGraph {
    build_graph_with(PartitionStrategy::Uniform)
}

pub fn build_graph_with(strategy: PartitionStrategy) -> SkeletonGraph {
    let center = joints::reduced_index(joints::SPINE_CHEST).expect("spine chest retained");
    SkeletonGraph::from_edges(REDUCED_JOINTS, joints::reduced_bones(), center, strategy)
        .expect("static skeleton is valid")
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(graph: &SkeletonGraph) -> Array2<f64> {
    let n = graph.num_nodes;
    let mut a = graph.adjacency();
    for i in 0..n {
        a[[i, i]] += 1.0;
    }
    let degree: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (degree[i] * degree[j]).sqrt())
}
