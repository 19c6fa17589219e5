//! Mini-batch training with Adam, translation augmentation and best-epoch
//! checkpoint selection on validation node accuracy.

mod adam;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_difference_gradient, worst_relative_errors, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluation::{edge_accuracy, node_accuracy, GraphPrediction, PredictionSet};
use crate::graph::{augment_translate, VesselGraph};
use crate::model::{model_forward, ForwardOutput, GraphInputs, ModelConfig, ModelParams};

pub use adam::{AdamState, BETA1, BETA2, EPSILON, LEARNING_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    #[default]
    NodeAcc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Graphs per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub augmentation: bool,
    /// Largest translation per axis, as a fraction of the normalized volume.
    pub max_translation: f64,
    pub node_loss_weight: f64,
    pub edge_loss_weight: f64,
    pub validation_metric: ValidationMetric,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 12000,
            learning_rate: LEARNING_RATE,
            augmentation: true,
            max_translation: 0.1,
            node_loss_weight: 1.0,
            edge_loss_weight: 1.0,
            validation_metric: ValidationMetric::NodeAcc,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.max_translation >= 0.0) {
            return Err(Error::invalid("max_translation must be >= 0"));
        }
        if !(self.node_loss_weight >= 0.0 && self.edge_loss_weight >= 0.0) {
            return Err(Error::invalid("loss weights must be >= 0"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-graph loss over the epoch's batches.
    pub train_loss: f64,
    pub val_node_acc: f64,
    pub val_edge_acc: Option<f64>,
    /// Optimizer steps taken so far.
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_val_node_acc: f64,
    pub log: Vec<EpochLog>,
}

/// `node_weight · CE(node) + edge_weight · CE(edge)` over fully labeled
/// graphs. A graph without edges contributes only the node term.
pub fn total_loss(
    tape: &mut Tape,
    out: &ForwardOutput,
    graph: &VesselGraph,
    node_weight: f64,
    edge_weight: f64,
) -> Result<Var> {
    let node_labels = graph
        .node_labels()
        .ok_or_else(|| Error::invalid(format!("graph `{}` has unlabeled nodes", graph.meta.scan_id)))?;
    let edge_labels = graph
        .edge_labels()
        .ok_or_else(|| Error::invalid(format!("graph `{}` has unlabeled edges", graph.meta.scan_id)))?;
    let node_ce = tape.softmax_cross_entropy(out.node_logits, &node_labels, &vec![true; node_labels.len()])?;
    let node_term = tape.scale(node_ce, node_weight);
    if edge_labels.is_empty() {
        return Ok(node_term);
    }
    let edge_ce = tape.softmax_cross_entropy(out.edge_logits, &edge_labels, &vec![true; edge_labels.len()])?;
    let edge_term = tape.scale(edge_ce, edge_weight);
    tape.add(node_term, edge_term)
}

/// Loss and gradients for a single graph.
pub fn graph_loss_and_gradient(
    inputs: &GraphInputs,
    graph: &VesselGraph,
    config: &ModelConfig,
    weights: &ParamSet,
    train: &TrainConfig,
) -> Result<(f64, ParamSet)> {
    let mut tape = Tape::new();
    let out = model_forward(&mut tape, inputs, config, weights)?;
    let loss = total_loss(&mut tape, &out, graph, train.node_loss_weight, train.edge_loss_weight)?;
    let value = tape.value(loss).item().expect("scalar loss");
    Ok((value, tape.backward(loss)?))
}

/// Worst relative error, per parameter, between the backpropagated gradient
/// of the training loss on `graph` and central differences with step `h`.
pub fn gradient_check(
    graph: &VesselGraph,
    params: &ModelParams,
    train: &TrainConfig,
    h: f64,
) -> Result<Vec<(String, f64)>> {
    let inputs = GraphInputs::from_graph(graph)?;
    let (_, analytic) = graph_loss_and_gradient(&inputs, graph, &params.config, &params.weights, train)?;
    let loss_at = |w: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let out = model_forward(&mut tape, &inputs, &params.config, w)?;
        let loss = total_loss(&mut tape, &out, graph, train.node_loss_weight, train.edge_loss_weight)?;
        Ok(tape.value(loss).item().expect("scalar loss"))
    };
    let numeric = finite_difference_gradient(
        |w| loss_at(w).expect("perturbed weights keep their shapes"),
        &params.weights,
        h,
    );
    Ok(worst_relative_errors(&analytic, &numeric))
}

/// Mean loss and mean gradient over a batch of graphs.
pub fn batch_loss_and_gradient(
    batch: &[(&GraphInputs, &VesselGraph)],
    config: &ModelConfig,
    weights: &ParamSet,
    train: &TrainConfig,
) -> Result<(f64, ParamSet)> {
    let scale = 1.0 / batch.len() as f64;
    let mut grads = weights.zeros_like();
    let mut loss = 0.0;
    for (inputs, graph) in batch {
        let (l, g) = graph_loss_and_gradient(inputs, graph, config, weights, train)?;
        loss += l * scale;
        grads.accumulate(&g, scale)?;
    }
    Ok((loss, grads))
}

/// Predictions of `params` on each graph paired with its labels.
pub fn predict_set(params: &ModelParams, graphs: &[VesselGraph], inputs: &[GraphInputs]) -> Result<PredictionSet> {
    let mut out = Vec::with_capacity(graphs.len());
    for (g, x) in graphs.iter().zip(inputs) {
        let (node_pred, edge_pred) = params.predict(x)?;
        out.push(GraphPrediction {
            scan_id: g.meta.scan_id.clone(),
            node_pred,
            node_true: g.node_labels().ok_or_else(|| Error::invalid("unlabeled node in evaluation graph"))?,
            edge_pred,
            edge_true: g.edge_labels().ok_or_else(|| Error::invalid("unlabeled edge in evaluation graph"))?,
        });
    }
    PredictionSet::new(out)
}

fn check_split(graphs: &[VesselGraph], name: &str) -> Result<Vec<GraphInputs>> {
    if graphs.is_empty() {
        return Err(Error::invalid(format!("{name} split is empty")));
    }
    graphs
        .iter()
        .map(|g| {
            if g.node_labels().is_none() || g.edge_labels().is_none() {
                return Err(Error::invalid(format!("{name} graph `{}` is not fully labeled", g.meta.scan_id)));
            }
            GraphInputs::from_graph(g)
        })
        .collect()
}

/// Trains from a fresh initialization (seeded by `model_config.seed`).
///
/// `on_best` is called with every new best model, after the epoch that
/// produced it; ties keep the earlier epoch.
pub fn train<F>(
    train_graphs: &[VesselGraph],
    val_graphs: &[VesselGraph],
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut on_best: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&ModelParams, &EpochLog) -> Result<()>,
{
    config.validate()?;
    let mut params = ModelParams::init(model_config, model_config.seed)?;
    let train_inputs = check_split(train_graphs, "train")?;
    let val_inputs = check_split(val_graphs, "validation")?;

    let mut adam = AdamState::new(&params.weights, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_graphs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(ModelParams, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut augmented = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let g = &train_graphs[i];
                if config.augmentation {
                    let moved = augment_translate(g, rng.next_u64(), config.max_translation)?;
                    augmented.push((train_inputs[i].with_features_of(&moved), g));
                } else {
                    augmented.push((train_inputs[i].clone(), g));
                }
            }
            let batch: Vec<(&GraphInputs, &VesselGraph)> = augmented.iter().map(|(x, g)| (x, *g)).collect();
            let (loss, grads) = batch_loss_and_gradient(&batch, &params.config, &params.weights, config)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    value: loss,
                });
            }
            adam.step(&mut params.weights, &grads)?;
            epoch_loss += loss;
            batches += 1;
        }

        let val = predict_set(&params, val_graphs, &val_inputs)?;
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_node_acc: node_accuracy(&val)?,
            val_edge_acc: edge_accuracy(&val).ok(),
            steps: adam.step,
        };
        if best.as_ref().is_none_or(|(_, _, score)| entry.val_node_acc > *score) {
            on_best(&params, &entry)?;
            best = Some((params.clone(), epoch, entry.val_node_acc));
        }
        log.push(entry);
    }

    let (best, best_epoch, best_val_node_acc) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_node_acc,
        log,
    })
}

/// Serializes the log as JSON lines.
pub fn log_to_jsonl(log: &[EpochLog]) -> String {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
        out.push('\n');
    }
    out
}
