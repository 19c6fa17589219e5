//! Attributed vessel graphs and the dense operators derived from them.
//!
//! Nodes are bifurcation or ending points; edges are artery segments running
//! from a sender node to a receiver node. Convolutions treat both the node
//! graph and its line graph (edges adjacent when they share an endpoint) as
//! undirected.

mod random;
mod topology;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

pub use random::random_graph;
pub use topology::{build_topology, normalize_adjacency, GraphTopology};

/// Number of node classes (bifurcation and ending types).
pub const NODE_CLASS_COUNT: usize = 21;
/// Width of the per-node input feature row: position, radius, direction.
pub const NODE_FEATURE_WIDTH: usize = 7;
/// Width of the per-edge input feature row: direction, distance, mean radius.
pub const EDGE_FEATURE_WIDTH: usize = 5;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    #[serde(rename = "pos")]
    pub position: [f64; 3],
    pub radius: f64,
    /// Unit tangent at the node, or exactly zero for isolated nodes.
    #[serde(rename = "dir")]
    pub direction: [f64; 3],
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    #[serde(rename = "s")]
    pub sender: usize,
    #[serde(rename = "r")]
    pub receiver: usize,
    #[serde(rename = "dir")]
    pub direction: [f64; 3],
    #[serde(rename = "dist")]
    pub distance: f64,
    pub mean_radius: f64,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub extents: [f64; 3],
    #[serde(default)]
    pub scan_id: String,
}

impl Default for GraphMeta {
    fn default() -> Self {
        GraphMeta {
            extents: [1.0; 3],
            scan_id: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselGraph {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub meta: GraphMeta,
}

/// A violated graph invariant, located by a JSON-style path such as
/// `edges[3].s`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidField {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for InvalidField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at `{}`: {}", self.path, self.message)
    }
}

fn invalid(path: String, message: impl Into<String>) -> InvalidField {
    InvalidField {
        path,
        message: message.into(),
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl VesselGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Checks every type invariant. Edge labels are range-checked only when
    /// `edge_class_count` is known.
    pub fn validate(&self, edge_class_count: Option<usize>) -> std::result::Result<(), InvalidField> {
        if self.nodes.is_empty() {
            return Err(invalid("nodes".into(), "graph has no nodes"));
        }
        for (i, e) in self.meta.extents.iter().enumerate() {
            if !(e.is_finite() && *e > 0.0) {
                return Err(invalid(format!("meta.extents[{i}]"), format!("extent {e} is not positive")));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(j) = n.position.iter().position(|v| !v.is_finite()) {
                return Err(invalid(format!("nodes[{i}].pos[{j}]"), format!("non-finite coordinate {}", n.position[j])));
            }
            if !(n.radius.is_finite() && n.radius >= 0.0) {
                return Err(invalid(format!("nodes[{i}].radius"), format!("radius {} must be finite and >= 0", n.radius)));
            }
            let len = norm(&n.direction);
            if n.direction != [0.0; 3] && !((len - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(invalid(format!("nodes[{i}].dir"), format!("direction norm {len} is neither 1 nor 0")));
            }
            if let Some(l) = n.label {
                if l >= NODE_CLASS_COUNT {
                    return Err(invalid(format!("nodes[{i}].label"), format!("label {l} outside 0..{NODE_CLASS_COUNT}")));
                }
            }
        }
        let n = self.nodes.len();
        for (k, e) in self.edges.iter().enumerate() {
            if e.sender >= n {
                return Err(invalid(format!("edges[{k}].s"), format!("sender index {} out of bounds for {n} nodes", e.sender)));
            }
            if e.receiver >= n {
                return Err(invalid(format!("edges[{k}].r"), format!("receiver index {} out of bounds for {n} nodes", e.receiver)));
            }
            if e.sender == e.receiver {
                return Err(invalid(format!("edges[{k}]"), format!("self-loop on node {}", e.sender)));
            }
            let len = norm(&e.direction);
            if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(invalid(format!("edges[{k}].dir"), format!("direction norm {len} is not 1")));
            }
            if !(e.distance.is_finite() && e.distance > 0.0) {
                return Err(invalid(format!("edges[{k}].dist"), format!("distance {} must be positive", e.distance)));
            }
            if !(e.mean_radius.is_finite() && e.mean_radius >= 0.0) {
                return Err(invalid(format!("edges[{k}].mean_radius"), format!("mean radius {} must be >= 0", e.mean_radius)));
            }
            if let (Some(l), Some(c)) = (e.label, edge_class_count) {
                if l >= c {
                    return Err(invalid(format!("edges[{k}].label"), format!("label {l} outside 0..{c}")));
                }
            }
        }
        Ok(())
    }

    /// Node input features, one row per node: `[x, y, z, radius, dx, dy, dz]`.
    pub fn node_features(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.nodes.len() * NODE_FEATURE_WIDTH);
        for n in &self.nodes {
            data.extend_from_slice(&n.position);
            data.push(n.radius);
            data.extend_from_slice(&n.direction);
        }
        Matrix::from_vec(self.nodes.len(), NODE_FEATURE_WIDTH, data).expect("fixed width")
    }

    /// Edge input features, one row per edge: `[dx, dy, dz, distance, mean_radius]`.
    pub fn edge_features(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.edges.len() * EDGE_FEATURE_WIDTH);
        for e in &self.edges {
            data.extend_from_slice(&e.direction);
            data.push(e.distance);
            data.push(e.mean_radius);
        }
        Matrix::from_vec(self.edges.len(), EDGE_FEATURE_WIDTH, data).expect("fixed width")
    }

    /// Node labels, or `None` if any node is unlabeled.
    pub fn node_labels(&self) -> Option<Vec<usize>> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    pub fn edge_labels(&self) -> Option<Vec<usize>> {
        self.edges.iter().map(|e| e.label).collect()
    }

    /// Relabels nodes so that old node `i` becomes `node_perm[i]`, and moves
    /// old edge `k` to position `edge_perm[k]`.
    pub fn permuted(&self, node_perm: &[usize], edge_perm: &[usize]) -> Result<VesselGraph> {
        check_permutation(node_perm, self.nodes.len(), "node")?;
        check_permutation(edge_perm, self.edges.len(), "edge")?;
        let mut nodes = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            nodes[node_perm[i]] = Some(n.clone());
        }
        let mut edges = vec![None; self.edges.len()];
        for (k, e) in self.edges.iter().enumerate() {
            let mut e = e.clone();
            e.sender = node_perm[e.sender];
            e.receiver = node_perm[e.receiver];
            edges[edge_perm[k]] = Some(e);
        }
        Ok(VesselGraph {
            nodes: nodes.into_iter().map(Option::unwrap).collect(),
            edges: edges.into_iter().map(Option::unwrap).collect(),
            meta: self.meta.clone(),
        })
    }
}

fn check_permutation(perm: &[usize], n: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::invalid(format!("{what} permutation has length {}, expected {n}", perm.len())));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid(format!("{what} permutation is not a bijection")));
        }
    }
    Ok(())
}

/// Divides every node position by the image extents, mapping raw voxel
/// coordinates into `[0, 1]`.
pub fn normalize_positions(graph: &VesselGraph, extents: [f64; 3]) -> Result<VesselGraph> {
    if let Some(e) = extents.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::invalid(format!("extent {e} must be positive")));
    }
    let mut out = graph.clone();
    for n in &mut out.nodes {
        for (p, e) in n.position.iter_mut().zip(extents) {
            *p /= e;
        }
    }
    Ok(out)
}

/// Adds one random offset, each component uniform on
/// `[-max_fraction, max_fraction]`, to every node position. Edge features are
/// relative quantities and are left alone.
pub fn augment_translate(graph: &VesselGraph, rng_seed: u64, max_fraction: f64) -> Result<VesselGraph> {
    if !(max_fraction >= 0.0 && max_fraction.is_finite()) {
        return Err(Error::invalid(format!(
            "max translation fraction {max_fraction} must be finite and >= 0"
        )));
    }
    if max_fraction == 0.0 {
        return Ok(graph.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let offset: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-max_fraction..=max_fraction));
    let mut out = graph.clone();
    for n in &mut out.nodes {
        for (p, o) in n.position.iter_mut().zip(offset) {
            *p += o;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
