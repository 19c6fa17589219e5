use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;

/// Graph operators recorded once per forward pass as tape constants.
#[derive(Debug, Clone, Copy)]
pub struct TopologyVars {
    pub node_adjacency: Var,
    pub edge_adjacency: Var,
    /// `0.5 · (incidence_in + incidence_out)`, N×K.
    pub incidence_mean: Var,
}

impl TopologyVars {
    pub fn record(tape: &mut Tape, topology: &GraphTopology) -> Self {
        TopologyVars {
            node_adjacency: tape.constant(topology.node_adjacency.clone()),
            edge_adjacency: tape.constant(topology.edge_adjacency.clone()),
            incidence_mean: tape.constant(topology.incidence_mean.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w_edge: Var,
    pub w_node: Var,
}

fn expect_rows(tape: &Tape, v: Var, rows: usize, what: &str) -> Result<()> {
    let got = tape.value(v).rows();
    if got != rows {
        return Err(Error::shape("gcn_layer", format!("{what} has {got} rows, graph needs {rows}")));
    }
    Ok(())
}

fn expect_cols(tape: &Tape, v: Var, w: Var, what: &str) -> Result<()> {
    let (x_cols, w_rows) = (tape.value(v).cols(), tape.value(w).rows());
    if x_cols != w_rows {
        return Err(Error::shape(
            "gcn_layer",
            format!("{what} expects {w_rows} input columns, features have {x_cols}"),
        ));
    }
    Ok(())
}

/// One graph convolution over both graphs, edges first:
///
/// ```text
/// X_edge' = σ(A_edge · X_edge · W_edge)
/// X_node' = σ(A_node · [X_node | M · X_edge'] · W_node)
/// ```
///
/// where `M = 0.5 · (incidence_in + incidence_out)` folds each edge's new
/// features into its two endpoints.
pub fn gcn_layer(
    tape: &mut Tape,
    topo: &TopologyVars,
    x_node: Var,
    x_edge: Var,
    layer: &LayerVars,
) -> Result<(Var, Var)> {
    let n = tape.value(topo.node_adjacency).rows();
    let k = tape.value(topo.edge_adjacency).rows();
    expect_rows(tape, x_node, n, "node features")?;
    expect_rows(tape, x_edge, k, "edge features")?;
    expect_cols(tape, x_edge, layer.w_edge, "W_edge")?;

    let xw = tape.matmul(x_edge, layer.w_edge)?;
    let pre = tape.matmul(topo.edge_adjacency, xw)?;
    let edge_out = tape.sigmoid(pre);

    let gathered = tape.matmul(topo.incidence_mean, edge_out)?;
    let augmented = tape.concat_cols(&[x_node, gathered])?;
    expect_cols(tape, augmented, layer.w_node, "W_node")?;
    let xw = tape.matmul(augmented, layer.w_node)?;
    let pre = tape.matmul(topo.node_adjacency, xw)?;
    let node_out = tape.sigmoid(pre);
    Ok((node_out, edge_out))
}
