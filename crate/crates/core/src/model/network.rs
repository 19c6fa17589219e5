use std::collections::HashMap;

use super::layer::{gcn_layer, LayerVars, TopologyVars};
use super::{w_edge_name, w_node_name, LayerShape, ModelConfig, ModelParams, EDGE_HEAD, NODE_HEAD};
use crate::autodiff::{Matrix, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{build_topology, GraphTopology, VesselGraph};

/// Everything the network reads from one graph.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub topology: GraphTopology,
    pub node_features: Matrix,
    pub edge_features: Matrix,
}

impl GraphInputs {
    pub fn from_graph(graph: &VesselGraph) -> Result<GraphInputs> {
        Ok(GraphInputs {
            topology: build_topology(graph)?,
            node_features: graph.node_features(),
            edge_features: graph.edge_features(),
        })
    }

    /// Same topology, features taken from `graph` (e.g. after augmentation).
    pub fn with_features_of(&self, graph: &VesselGraph) -> GraphInputs {
        GraphInputs {
            topology: self.topology.clone(),
            node_features: graph.node_features(),
            edge_features: graph.edge_features(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FusedFeatures {
    pub node: Var,
    pub edge: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub node_logits: Var,
    pub edge_logits: Var,
    /// Message-passing rounds actually executed by the core.
    pub rounds_run: usize,
}

/// Registers each weight on the tape the first time it is used, so tied
/// weights share one leaf and their gradients accumulate.
struct WeightVars<'a> {
    weights: &'a ParamSet,
    vars: HashMap<String, Var>,
}

impl<'a> WeightVars<'a> {
    fn new(weights: &'a ParamSet) -> Self {
        WeightVars {
            weights,
            vars: HashMap::new(),
        }
    }

    fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let v = tape.param(name, self.weights.require(name)?.clone());
        self.vars.insert(name.to_owned(), v);
        Ok(v)
    }

    fn layer(&mut self, tape: &mut Tape, shape: &LayerShape) -> Result<LayerVars> {
        let w_edge = self.get(tape, &w_edge_name(&shape.name))?;
        let w_node = self.get(tape, &w_node_name(&shape.name))?;
        for (v, expected) in [(w_edge, shape.w_edge_shape()), (w_node, shape.w_node_shape())] {
            if tape.value(v).shape() != expected {
                return Err(Error::shape(
                    "model",
                    format!(
                        "{} weight is {:?}, expected {expected:?}",
                        shape.name,
                        tape.value(v).shape()
                    ),
                ));
            }
        }
        Ok(LayerVars { w_edge, w_node })
    }
}

fn stack(
    tape: &mut Tape,
    topo: &TopologyVars,
    weights: &mut WeightVars<'_>,
    shapes: &[LayerShape],
    mut x_node: Var,
    mut x_edge: Var,
) -> Result<Vec<(Var, Var)>> {
    let mut outputs = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let layer = weights.layer(tape, shape)?;
        (x_node, x_edge) = gcn_layer(tape, topo, x_node, x_edge, &layer)?;
        outputs.push((x_node, x_edge));
    }
    Ok(outputs)
}

fn fuse(tape: &mut Tape, outputs: &[(Var, Var)], pool_kernel: Option<usize>) -> Result<FusedFeatures> {
    let mut nodes = Vec::with_capacity(outputs.len());
    let mut edges = Vec::with_capacity(outputs.len());
    for &(n, e) in outputs {
        match pool_kernel {
            Some(k) => {
                nodes.push(tape.avgpool_cols(n, k)?);
                edges.push(tape.avgpool_cols(e, k)?);
            }
            None => {
                nodes.push(n);
                edges.push(e);
            }
        }
    }
    Ok(FusedFeatures {
        node: tape.concat_cols(&nodes)?,
        edge: tape.concat_cols(&edges)?,
    })
}

fn encoder_impl(
    tape: &mut Tape,
    topo: &TopologyVars,
    weights: &mut WeightVars<'_>,
    config: &ModelConfig,
    x_node: Var,
    x_edge: Var,
) -> Result<FusedFeatures> {
    let shapes: Vec<_> = (0..config.encoder_depth).map(|i| config.encoder_layer(i)).collect();
    let outputs = stack(tape, topo, weights, &shapes, x_node, x_edge)?;
    fuse(tape, &outputs, config.pooling_enabled.then_some(config.pool_kernel))
}

fn core_impl(
    tape: &mut Tape,
    topo: &TopologyVars,
    weights: &mut WeightVars<'_>,
    config: &ModelConfig,
    encoded: FusedFeatures,
) -> Result<(FusedFeatures, usize)> {
    let fused_width = config.encoder_fused_width();
    for v in [encoded.node, encoded.edge] {
        if tape.value(v).cols() != fused_width {
            return Err(Error::shape(
                "core",
                format!("encoder output has {} columns, expected {fused_width}", tape.value(v).cols()),
            ));
        }
    }
    let shapes: Vec<_> = (0..config.core_depth).map(|i| config.core_layer(i)).collect();
    let projection = config.core_projection();
    let mut previous = encoded;
    let mut rounds = 0;
    for _ in 0..config.message_passing_rounds {
        // First round sees the encoder output twice.
        let x_node = tape.concat_cols(&[encoded.node, previous.node])?;
        let x_edge = tape.concat_cols(&[encoded.edge, previous.edge])?;
        let outputs = stack(tape, topo, weights, &shapes, x_node, x_edge)?;
        let fused = fuse(tape, &outputs, None)?;
        let layer = weights.layer(tape, &projection)?;
        let (node, edge) = gcn_layer(tape, topo, fused.node, fused.edge, &layer)?;
        previous = FusedFeatures { node, edge };
        rounds += 1;
    }
    Ok((previous, rounds))
}

fn decoder_impl(
    tape: &mut Tape,
    topo: &TopologyVars,
    weights: &mut WeightVars<'_>,
    config: &ModelConfig,
    core_out: FusedFeatures,
) -> Result<FusedFeatures> {
    let shapes: Vec<_> = (0..config.decoder_depth).map(|i| config.decoder_layer(i)).collect();
    let outputs = stack(tape, topo, weights, &shapes, core_out.node, core_out.edge)?;
    fuse(tape, &outputs, None)
}

/// Runs the encoder layers and fuses their outputs, pooled when the config
/// enables pooling.
pub fn encoder_forward(
    tape: &mut Tape,
    topo: &TopologyVars,
    x_node: Var,
    x_edge: Var,
    config: &ModelConfig,
    weights: &ParamSet,
) -> Result<FusedFeatures> {
    encoder_impl(tape, topo, &mut WeightVars::new(weights), config, x_node, x_edge)
}

/// Runs the message-passing rounds and returns the last round's output with
/// the number of rounds executed.
pub fn core_forward(
    tape: &mut Tape,
    topo: &TopologyVars,
    encoded: FusedFeatures,
    config: &ModelConfig,
    weights: &ParamSet,
) -> Result<(FusedFeatures, usize)> {
    core_impl(tape, topo, &mut WeightVars::new(weights), config, encoded)
}

pub fn decoder_forward(
    tape: &mut Tape,
    topo: &TopologyVars,
    core_out: FusedFeatures,
    config: &ModelConfig,
    weights: &ParamSet,
) -> Result<FusedFeatures> {
    decoder_impl(tape, topo, &mut WeightVars::new(weights), config, core_out)
}

/// Encoder, core, decoder and the two linear heads. Logits are not activated.
pub fn model_forward(
    tape: &mut Tape,
    inputs: &GraphInputs,
    config: &ModelConfig,
    weights: &ParamSet,
) -> Result<ForwardOutput> {
    let topo = TopologyVars::record(tape, &inputs.topology);
    let x_node = tape.constant(inputs.node_features.clone());
    let x_edge = tape.constant(inputs.edge_features.clone());
    let mut wv = WeightVars::new(weights);
    let encoded = encoder_impl(tape, &topo, &mut wv, config, x_node, x_edge)?;
    let (core_out, rounds_run) = core_impl(tape, &topo, &mut wv, config, encoded)?;
    let decoded = decoder_impl(tape, &topo, &mut wv, config, core_out)?;
    let node_head = wv.get(tape, NODE_HEAD)?;
    let edge_head = wv.get(tape, EDGE_HEAD)?;
    Ok(ForwardOutput {
        node_logits: tape.matmul(decoded.node, node_head)?,
        edge_logits: tape.matmul(decoded.edge, edge_head)?,
        rounds_run,
    })
}

impl ModelParams {
    pub fn forward(&self, tape: &mut Tape, inputs: &GraphInputs) -> Result<ForwardOutput> {
        model_forward(tape, inputs, &self.config, &self.weights)
    }

    /// Node and edge logits without keeping the tape.
    pub fn logits(&self, inputs: &GraphInputs) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, inputs)?;
        Ok((
            tape.value(out.node_logits).clone(),
            tape.value(out.edge_logits).clone(),
        ))
    }

    /// Predicted node and edge classes.
    pub fn predict(&self, inputs: &GraphInputs) -> Result<(Vec<usize>, Vec<usize>)> {
        let (node, edge) = self.logits(inputs)?;
        Ok((argmax_rows(&node), argmax_rows(&edge)))
    }
}

/// Column of each row's maximum; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
