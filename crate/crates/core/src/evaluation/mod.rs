//! Labeling metrics over a set of predicted graphs.
//!
//! Accuracies are item-weighted over all graphs. Precision and recall treat
//! node classes and edge classes as one pool of classes (namespaced by kind)
//! and are macro-averaged over the classes that occur in the ground truth,
//! unless [`Averaging::Micro`] is requested.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicted and true classes for one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPrediction {
    pub scan_id: String,
    pub node_pred: Vec<usize>,
    pub node_true: Vec<usize>,
    pub edge_pred: Vec<usize>,
    pub edge_true: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    graphs: Vec<GraphPrediction>,
}

impl PredictionSet {
    pub fn new(graphs: Vec<GraphPrediction>) -> Result<PredictionSet> {
        for g in &graphs {
            if g.node_pred.len() != g.node_true.len() || g.edge_pred.len() != g.edge_true.len() {
                return Err(Error::invalid(format!(
                    "scan `{}`: prediction lengths ({}, {}) differ from truth ({}, {})",
                    g.scan_id,
                    g.node_pred.len(),
                    g.edge_pred.len(),
                    g.node_true.len(),
                    g.edge_true.len()
                )));
            }
        }
        Ok(PredictionSet { graphs })
    }

    pub fn graphs(&self) -> &[GraphPrediction] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    fn node_totals(&self) -> (usize, usize) {
        self.graphs.iter().fold((0, 0), |(c, t), g| (c + correct(&g.node_pred, &g.node_true), t + g.node_true.len()))
    }
}

fn correct(pred: &[usize], truth: &[usize]) -> usize {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count()
}

/// Correct nodes over all nodes.
pub fn node_accuracy(preds: &PredictionSet) -> Result<f64> {
    let (correct, total) = preds.node_totals();
    if total == 0 {
        return Err(Error::invalid("node accuracy needs at least one node"));
    }
    Ok(correct as f64 / total as f64)
}

/// Mean number of mislabeled nodes per graph.
pub fn node_wrong(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::invalid("node_wrong needs at least one graph"));
    }
    let (correct, total) = preds.node_totals();
    Ok((total - correct) as f64 / preds.len() as f64)
}

/// Fraction of graphs in which every node whose true class is in `cow_classes`
/// is predicted correctly. Graphs with no such node count as solved.
pub fn cow_node_solve(preds: &PredictionSet, cow_classes: &BTreeSet<usize>) -> Result<f64> {
    if cow_classes.is_empty() {
        return Err(Error::invalid("circle-of-Willis class set is empty"));
    }
    if preds.is_empty() {
        return Err(Error::invalid("cow_node_solve needs at least one graph"));
    }
    let solved = preds
        .graphs
        .iter()
        .filter(|g| {
            g.node_true
                .iter()
                .zip(&g.node_pred)
                .all(|(t, p)| !cow_classes.contains(t) || t == p)
        })
        .count();
    Ok(solved as f64 / preds.len() as f64)
}

/// Correct edges over all edges.
pub fn edge_accuracy(preds: &PredictionSet) -> Result<f64> {
    let (correct, total) = preds
        .graphs
        .iter()
        .fold((0, 0), |(c, t), g| (c + correct(&g.edge_pred, &g.edge_true), t + g.edge_true.len()));
    if total == 0 {
        return Err(Error::invalid("edge accuracy needs at least one edge"));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Node,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ClassCounts {
    pub fn support(&self) -> usize {
        self.true_positive + self.false_negative
    }

    /// Zero when the class is never predicted.
    pub fn precision(&self) -> f64 {
        let predicted = self.true_positive + self.false_positive;
        if predicted == 0 {
            0.0
        } else {
            self.true_positive as f64 / predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let support = self.support();
        if support == 0 {
            0.0
        } else {
            self.true_positive as f64 / support as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// Counts for every class that was predicted or present.
    pub per_class: BTreeMap<(ItemKind, usize), ClassCounts>,
}

pub fn class_counts(preds: &PredictionSet) -> BTreeMap<(ItemKind, usize), ClassCounts> {
    let mut counts: BTreeMap<(ItemKind, usize), ClassCounts> = BTreeMap::new();
    for g in &preds.graphs {
        let items = g
            .node_pred
            .iter()
            .zip(&g.node_true)
            .map(|(p, t)| (ItemKind::Node, *p, *t))
            .chain(g.edge_pred.iter().zip(&g.edge_true).map(|(p, t)| (ItemKind::Edge, *p, *t)));
        for (kind, p, t) in items {
            if p == t {
                counts.entry((kind, t)).or_default().true_positive += 1;
            } else {
                counts.entry((kind, p)).or_default().false_positive += 1;
                counts.entry((kind, t)).or_default().false_negative += 1;
            }
        }
    }
    counts
}

pub fn precision_recall(preds: &PredictionSet, averaging: Averaging) -> Result<PrecisionRecall> {
    let per_class = class_counts(preds);
    let present: Vec<&ClassCounts> = per_class.values().filter(|c| c.support() > 0).collect();
    if present.is_empty() {
        return Err(Error::invalid("precision/recall needs at least one labeled item"));
    }
    let (precision, recall) = match averaging {
        Averaging::Macro => {
            let n = present.len() as f64;
            (
                present.iter().map(|c| c.precision()).sum::<f64>() / n,
                present.iter().map(|c| c.recall()).sum::<f64>() / n,
            )
        }
        Averaging::Micro => {
            let tp: usize = per_class.values().map(|c| c.true_positive).sum();
            let fp: usize = per_class.values().map(|c| c.false_positive).sum();
            let fnn: usize = per_class.values().map(|c| c.false_negative).sum();
            (tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fnn) as f64)
        }
    };
    Ok(PrecisionRecall {
        precision,
        recall,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

/// The six headline scores plus per-class precision and recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub node_acc: f64,
    pub node_wrong: f64,
    pub cow_node_solve: f64,
    pub edge_acc: f64,
    pub precision: f64,
    pub recall: f64,
    /// `"node"` / `"edge"` → class name → scores, for classes present in the
    /// ground truth.
    pub per_class: BTreeMap<String, BTreeMap<String, ClassScore>>,
}

/// Class names used to key the per-class table. Missing names fall back to
/// the numeric class id.
#[derive(Debug, Clone, Default)]
pub struct ClassNames<'a> {
    pub node: &'a [String],
    pub edge: &'a [String],
}

impl MetricsReport {
    pub fn compute(
        preds: &PredictionSet,
        cow_classes: &BTreeSet<usize>,
        averaging: Averaging,
        names: &ClassNames<'_>,
    ) -> Result<MetricsReport> {
        let pr = precision_recall(preds, averaging)?;
        let mut per_class: BTreeMap<String, BTreeMap<String, ClassScore>> = BTreeMap::new();
        for (&(kind, class), counts) in &pr.per_class {
            if counts.support() == 0 {
                continue;
            }
            let (table, list) = match kind {
                ItemKind::Node => ("node", names.node),
                ItemKind::Edge => ("edge", names.edge),
            };
            let name = list.get(class).cloned().unwrap_or_else(|| class.to_string());
            per_class.entry(table.to_owned()).or_default().insert(
                name,
                ClassScore {
                    precision: counts.precision(),
                    recall: counts.recall(),
                    support: counts.support(),
                },
            );
        }
        Ok(MetricsReport {
            node_acc: node_accuracy(preds)?,
            node_wrong: node_wrong(preds)?,
            cow_node_solve: cow_node_solve(preds, cow_classes)?,
            edge_acc: edge_accuracy(preds)?,
            precision: pr.precision,
            recall: pr.recall,
            per_class,
        })
    }
}

#[cfg(test)]
mod tests;
