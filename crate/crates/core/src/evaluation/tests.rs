use proptest::prelude::*;

use super::*;

fn graph(id: &str, node_pred: &[usize], node_true: &[usize], edge_pred: &[usize], edge_true: &[usize]) -> GraphPrediction {
    GraphPrediction {
        scan_id: id.into(),
        node_pred: node_pred.to_vec(),
        node_true: node_true.to_vec(),
        edge_pred: edge_pred.to_vec(),
        edge_true: edge_true.to_vec(),
    }
}

fn cow(ids: &[usize]) -> BTreeSet<usize> {
    ids.iter().copied().collect()
}

#[test]
fn accuracy_examples() {
    let all = PredictionSet::new(vec![graph("a", &[1, 2, 3], &[1, 2, 3], &[0, 1], &[0, 1])]).unwrap();
    assert_eq!(node_accuracy(&all).unwrap(), 1.0);
    assert_eq!(edge_accuracy(&all).unwrap(), 1.0);
    assert_eq!(node_wrong(&all).unwrap(), 0.0);

    let three_of_four = PredictionSet::new(vec![graph("a", &[1, 2, 3, 0], &[1, 2, 3, 4], &[0], &[1])]).unwrap();
    assert_eq!(node_accuracy(&three_of_four).unwrap(), 0.75);
    assert_eq!(edge_accuracy(&three_of_four).unwrap(), 0.0);
}

#[test]
fn node_wrong_averages_per_scan() {
    let set = PredictionSet::new(vec![
        graph("a", &[0, 0, 0, 1], &[1, 1, 1, 1], &[], &[]),
        graph("b", &[5, 6], &[5, 7], &[], &[]),
    ])
    .unwrap();
    assert_eq!(node_wrong(&set).unwrap(), 2.0);
}

#[test]
fn cow_solve_examples() {
    let set = PredictionSet::new(vec![
        graph("a", &[1, 2, 9], &[1, 2, 3], &[], &[]),
        graph("b", &[1, 0], &[1, 2], &[], &[]),
    ])
    .unwrap();
    // Only "b" misses a class-2 node.
    assert_eq!(cow_node_solve(&set, &cow(&[1, 2])).unwrap(), 0.5);
    // No CoW nodes at all counts as solved.
    assert_eq!(cow_node_solve(&set, &cow(&[17])).unwrap(), 1.0);
    assert!(cow_node_solve(&set, &cow(&[])).is_err());
}

#[test]
fn precision_recall_definitional_case() {
    // Single class 0: two hits, one false alarm (true 1 predicted 0), one miss.
    let set = PredictionSet::new(vec![graph("a", &[0, 0, 0, 1], &[0, 0, 1, 0], &[], &[])]).unwrap();
    let pr = precision_recall(&set, Averaging::Macro).unwrap();
    let c0 = pr.per_class[&(ItemKind::Node, 0)];
    assert_eq!((c0.precision(), c0.recall()), (2.0 / 3.0, 2.0 / 3.0));

    let perfect = PredictionSet::new(vec![graph("a", &[3, 4], &[3, 4], &[1], &[1])]).unwrap();
    let pr = precision_recall(&perfect, Averaging::Macro).unwrap();
    assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    assert_eq!(pr.per_class.len(), 3);
}

#[test]
fn node_and_edge_classes_are_namespaced() {
    let set = PredictionSet::new(vec![graph("a", &[0], &[0], &[1], &[0])]).unwrap();
    let pr = precision_recall(&set, Averaging::Macro).unwrap();
    assert_eq!(pr.per_class[&(ItemKind::Node, 0)].true_positive, 1);
    assert_eq!(pr.per_class[&(ItemKind::Edge, 0)].false_negative, 1);
    // Classes present: node 0 (p 1, r 1), edge 0 (p 0, r 0).
    assert_eq!((pr.precision, pr.recall), (0.5, 0.5));
}

#[test]
fn errors_on_empty_inputs() {
    let empty = PredictionSet::new(vec![]).unwrap();
    assert!(node_accuracy(&empty).is_err());
    assert!(node_wrong(&empty).is_err());
    assert!(cow_node_solve(&empty, &cow(&[1])).is_err());
    assert!(precision_recall(&empty, Averaging::Macro).is_err());
    let no_edges = PredictionSet::new(vec![graph("a", &[1], &[1], &[], &[])]).unwrap();
    assert!(edge_accuracy(&no_edges).is_err());
    assert!(PredictionSet::new(vec![graph("a", &[1, 2], &[1], &[], &[])]).is_err());
}

#[test]
fn report_uses_class_names() {
    let set = PredictionSet::new(vec![graph("a", &[0, 1], &[0, 0], &[2], &[2])]).unwrap();
    let node_names = vec!["ICA_L".to_string(), "ICA_R".to_string()];
    let edge_names: Vec<String> = vec![];
    let report = MetricsReport::compute(
        &set,
        &cow(&[0]),
        Averaging::Macro,
        &ClassNames { node: &node_names, edge: &edge_names },
    )
    .unwrap();
    assert_eq!(report.per_class["node"]["ICA_L"].support, 2);
    assert!(!report.per_class["node"].contains_key("ICA_R"));
    assert_eq!(report.per_class["edge"]["2"].precision, 1.0);
    let json = serde_json::to_value(&report).unwrap();
    for key in ["node_acc", "node_wrong", "cow_node_solve", "edge_acc", "precision", "recall", "per_class"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

/// Confusion matrices built by exhaustive counting, one per item kind.
fn confusion_oracle(set: &PredictionSet, classes: usize) -> (f64, f64) {
    let mut node = vec![vec![0usize; classes]; classes];
    let mut edge = vec![vec![0usize; classes]; classes];
    for g in set.graphs() {
        for (p, t) in g.node_pred.iter().zip(&g.node_true) {
            node[*t][*p] += 1;
        }
        for (p, t) in g.edge_pred.iter().zip(&g.edge_true) {
            edge[*t][*p] += 1;
        }
    }
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for m in [&node, &edge] {
        for c in 0..classes {
            let row: usize = m[c].iter().sum();
            if row == 0 {
                continue;
            }
            let col: usize = (0..classes).map(|r| m[r][c]).sum();
            precisions.push(if col == 0 { 0.0 } else { m[c][c] as f64 / col as f64 });
            recalls.push(m[c][c] as f64 / row as f64);
        }
    }
    let n = precisions.len() as f64;
    (precisions.iter().sum::<f64>() / n, recalls.iter().sum::<f64>() / n)
}

fn prediction_set(classes: usize) -> impl Strategy<Value = PredictionSet> {
    let pair = (0..classes, 0..classes);
    let g = (
        proptest::collection::vec(pair.clone(), 1..10),
        proptest::collection::vec(pair, 0..8),
    );
    proptest::collection::vec(g, 1..5).prop_map(|graphs| {
        let graphs = graphs
            .into_iter()
            .enumerate()
            .map(|(i, (nodes, edges))| GraphPrediction {
                scan_id: format!("g{i}"),
                node_pred: nodes.iter().map(|x| x.0).collect(),
                node_true: nodes.iter().map(|x| x.1).collect(),
                edge_pred: edges.iter().map(|x| x.0).collect(),
                edge_true: edges.iter().map(|x| x.1).collect(),
            })
            .collect();
        PredictionSet::new(graphs).unwrap()
    })
}

proptest! {
    #[test]
    fn precision_recall_matches_confusion_oracle(set in prediction_set(4)) {
        let pr = precision_recall(&set, Averaging::Macro).unwrap();
        let (p, r) = confusion_oracle(&set, 4);
        prop_assert!((pr.precision - p).abs() < 1e-12);
        prop_assert!((pr.recall - r).abs() < 1e-12);
    }

    #[test]
    fn node_wrong_times_graphs_counts_errors(set in prediction_set(3)) {
        let total: usize = set.graphs().iter().map(|g| g.node_true.len()).sum();
        let right: usize = set.graphs().iter().map(|g| correct(&g.node_pred, &g.node_true)).sum();
        prop_assert_eq!(node_wrong(&set).unwrap() * set.len() as f64, (total - right) as f64);
        let acc = node_accuracy(&set).unwrap();
        let wrong = node_wrong(&set).unwrap();
        let solve = cow_node_solve(&set, &cow(&[0, 1, 2])).unwrap();
        prop_assert_eq!(acc == 1.0, wrong == 0.0);
        prop_assert_eq!(acc == 1.0, solve == 1.0);
    }

    #[test]
    fn metrics_ignore_graph_order(set in prediction_set(3)) {
        let mut reversed = set.graphs().to_vec();
        reversed.reverse();
        let rev = PredictionSet::new(reversed).unwrap();
        prop_assert_eq!(node_accuracy(&set).unwrap(), node_accuracy(&rev).unwrap());
        prop_assert_eq!(node_wrong(&set).unwrap(), node_wrong(&rev).unwrap());
        prop_assert_eq!(
            precision_recall(&set, Averaging::Macro).unwrap().precision,
            precision_recall(&rev, Averaging::Macro).unwrap().precision
        );
    }

    #[test]
    fn micro_average_equals_pooled_accuracy(set in prediction_set(3)) {
        let pr = precision_recall(&set, Averaging::Micro).unwrap();
        let items: usize = set.graphs().iter().map(|g| g.node_true.len() + g.edge_true.len()).sum();
        let right: usize = set
            .graphs()
            .iter()
            .map(|g| correct(&g.node_pred, &g.node_true) + correct(&g.edge_pred, &g.edge_true))
            .sum();
        prop_assert!((pr.precision - right as f64 / items as f64).abs() < 1e-12);
        prop_assert!((pr.recall - pr.precision).abs() < 1e-12);
    }
}
