use super::VesselGraph;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Dense operators for one graph, shared by every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    /// N×N, normalized undirected node adjacency with self-loops.
    pub node_adjacency: Matrix,
    /// K×K, normalized line-graph adjacency with self-loops.
    pub edge_adjacency: Matrix,
    /// N×K, 1 where node i receives edge k.
    pub incidence_in: Matrix,
    /// N×K, 1 where node i sends edge k.
    pub incidence_out: Matrix,
    /// N×K, `0.5 · (incidence_in + incidence_out)`, the edge→node aggregation.
    pub incidence_mean: Matrix,
}

impl GraphTopology {
    pub fn node_count(&self) -> usize {
        self.node_adjacency.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_adjacency.rows()
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` where `D̂` is the degree matrix of `A + I`.
pub fn normalize_adjacency(raw: &Matrix) -> Result<Matrix> {
    let (n, m) = raw.shape();
    if n != m {
        return Err(Error::invalid(format!("adjacency must be square, got {n}x{m}")));
    }
    for i in 0..n {
        for j in 0..n {
            let v = raw.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(Error::invalid(format!("adjacency entry ({i},{j}) = {v} is not binary")));
            }
            if v != raw.get(j, i) {
                return Err(Error::invalid(format!("adjacency is asymmetric at ({i},{j})")));
            }
        }
        if raw.get(i, i) != 0.0 {
            return Err(Error::invalid(format!("adjacency has a self-loop at {i}")));
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| 1.0 + raw.row(i).iter().sum::<f64>()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { raw.get(i, j) };
            if a != 0.0 {
                out.set(i, j, 1.0 / (degree[i] * degree[j]).sqrt());
            }
        }
    }
    Ok(out)
}

pub fn build_topology(graph: &VesselGraph) -> Result<GraphTopology> {
    let n = graph.nodes.len();
    let k = graph.edges.len();
    if n == 0 {
        return Err(Error::invalid("graph has no nodes"));
    }
    let mut node_raw = Matrix::zeros(n, n);
    let mut incidence_in = Matrix::zeros(n, k);
    let mut incidence_out = Matrix::zeros(n, k);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in graph.edges.iter().enumerate() {
        let (s, r) = (e.sender, e.receiver);
        if s >= n || r >= n || s == r {
            return Err(Error::invalid(format!("edge {idx} has invalid endpoints ({s}, {r})")));
        }
        node_raw.set(s, r, 1.0);
        node_raw.set(r, s, 1.0);
        incidence_in.set(r, idx, 1.0);
        incidence_out.set(s, idx, 1.0);
        incident[s].push(idx);
        incident[r].push(idx);
    }
    let mut edge_raw = Matrix::zeros(k, k);
    for edges in &incident {
        for (i, &a) in edges.iter().enumerate() {
            for &b in &edges[i + 1..] {
                if a != b {
                    edge_raw.set(a, b, 1.0);
                    edge_raw.set(b, a, 1.0);
                }
            }
        }
    }
    let mut incidence_mean = incidence_in.clone();
    incidence_mean.add_assign(&incidence_out);
    incidence_mean.scale_in_place(0.5);
    Ok(GraphTopology {
        node_adjacency: normalize_adjacency(&node_raw)?,
        edge_adjacency: normalize_adjacency(&edge_raw)?,
        incidence_in,
        incidence_out,
        incidence_mean,
    })
}
