use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synth::*;
use super::*;
use crate::graph::random_graph;

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        train_count: 3,
        val_count: 2,
        test_count: 2,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn graph_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let g = random_graph(3, 9, 12, 4);
    let path = dir.path().join("g.json");
    save_graph(&path, &g).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = load_graph(&path, Some(4)).unwrap();
    assert_eq!(back, g);
    for (a, b) in back.nodes.iter().zip(&g.nodes) {
        assert!(a.position.iter().zip(&b.position).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    save_graph(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn out_of_bounds_sender_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = random_graph(1, 5, 5, 4);
    g.edges[2].sender = 5;
    let path = dir.path().join("bad.json");
    save_graph(&path, &g).unwrap();
    let err = load_graph(&path, None).unwrap_err();
    match &err {
        Error::Schema { file, path, message } => {
            assert!(file.ends_with("bad.json"));
            assert_eq!(path, "edges[2].s");
            assert!(message.contains("index 5 out of bounds"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn schema_violations_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let mut v = serde_json::to_value(random_graph(1, 4, 4, 2)).unwrap();
    v["nodes"][2]["radius"] = serde_json::json!("wide");
    std::fs::write(&path, v.to_string()).unwrap();
    match load_graph(&path, None).unwrap_err() {
        Error::Schema { path, message, .. } => {
            assert_eq!(path, "nodes[2].radius");
            assert!(message.contains("wide"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut v = serde_json::to_value(random_graph(1, 4, 4, 2)).unwrap();
    v["nodes"][0]["label"] = serde_json::json!(21);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(load_graph(&path, None), Err(Error::Schema { path, .. }) if path == "nodes[0].label"));
}

#[test]
fn dataset_round_trip_and_overlap_check() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_synthetic(&small_synth(4), dir.path()).unwrap();
    let loaded = load_dataset(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded, ds);

    let mut manifest = ds.manifest.clone();
    manifest.test[0] = manifest.train[1].clone();
    write_json(&dir.path().join("manifest.json"), &manifest).unwrap();
    let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
    assert!(err.to_string().contains("more than one split"), "{err}");
}

#[test]
fn manifest_validation() {
    let ds = generate_synthetic(&small_synth(1)).unwrap();
    assert!(ds.manifest.validate().is_ok());
    let mut m = ds.manifest.clone();
    m.node_classes.pop();
    assert!(m.validate().is_err());
    let mut m = ds.manifest.clone();
    m.cow_class_ids = vec![];
    assert!(m.validate().is_err());
    let mut m = ds.manifest;
    m.cow_class_ids = vec![30];
    assert!(m.validate().is_err());
}

#[test]
fn edge_labels_are_checked_against_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_synthetic(&small_synth(2), dir.path()).unwrap();
    let mut m = ds.manifest.clone();
    m.edge_classes.truncate(1);
    write_json(&dir.path().join("manifest.json"), &m).unwrap();
    assert!(matches!(
        load_dataset(&dir.path().join("manifest.json")),
        Err(Error::Schema { .. })
    ));
}

#[test]
fn jsonl_and_normalizing_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let mut graphs: Vec<VesselGraph> = (0..3).map(|s| random_graph(s, 5, 6, 3)).collect();
    for g in &mut graphs {
        g.meta.extents = [200.0, 100.0, 50.0];
        for n in &mut g.nodes {
            n.position = [n.position[0] * 200.0, n.position[1] * 100.0, n.position[2] * 50.0];
        }
    }
    let lines: String = graphs.iter().map(|g| serde_json::to_string(g).unwrap() + "\n").collect();
    std::fs::write(dir.path().join("train.jsonl"), lines).unwrap();
    save_graph(&dir.path().join("val.json"), &graphs[0]).unwrap();
    save_graph(&dir.path().join("test.json"), &graphs[1]).unwrap();
    let manifest = DatasetManifest {
        train: vec!["train.jsonl".into()],
        val: vec!["val.json".into()],
        test: vec!["test.json".into()],
        node_classes: node_class_names(),
        edge_classes: edge_class_names(3),
        cow_class_ids: vec![1],
        extents_policy: ExtentsPolicy::Normalize,
    };
    write_json(&dir.path().join("m.json"), &manifest).unwrap();
    let ds = load_dataset(&dir.path().join("m.json")).unwrap();
    assert_eq!(ds.train.len(), 3);
    for g in ds.train.iter().chain(&ds.val) {
        assert!(g.nodes.iter().all(|n| n.position.iter().all(|p| (0.0..=1.0).contains(p))));
    }
}

#[test]
fn noise_free_labels_follow_the_rule() {
    let ds = generate_synthetic(&small_synth(7)).unwrap();
    for g in ds.train.iter().chain(&ds.val).chain(&ds.test) {
        let deg = degrees(g);
        for (n, d) in g.nodes.iter().zip(deg) {
            assert_eq!(n.label, Some(rule_node_label(&n.position, d)));
        }
        for e in &g.edges {
            let (s, r) = (g.nodes[e.sender].label.unwrap(), g.nodes[e.receiver].label.unwrap());
            assert_eq!(e.label, Some(rule_edge_label(s, r, 8)));
        }
    }
}

#[test]
fn noise_changes_roughly_the_requested_fraction() {
    let cfg = SynthConfig { noise: 0.3, train_count: 30, ..small_synth(3) };
    let ds = generate_synthetic(&cfg).unwrap();
    let (mut flipped, mut total) = (0, 0);
    for g in &ds.train {
        for (n, d) in g.nodes.iter().zip(degrees(g)) {
            total += 1;
            flipped += usize::from(n.label != Some(rule_node_label(&n.position, d)));
        }
    }
    let rate = flipped as f64 / total as f64;
    assert!((0.2..0.4).contains(&rate), "{rate}");
}

#[test]
fn synthetic_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_synthetic(&small_synth(11), a.path()).unwrap();
    write_synthetic(&small_synth(11), b.path()).unwrap();
    for rel in ["manifest.json", "train/000.json", "train/002.json", "val/001.json", "test/000.json"] {
        assert_eq!(
            std::fs::read(a.path().join(rel)).unwrap(),
            std::fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn synthetic_graphs_satisfy_invariants_over_many_seeds() {
    let cfg = SynthConfig::default();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = generate_graph(&cfg, &mut rng, format!("s{seed}"));
        assert!((cfg.min_nodes..=cfg.max_nodes).contains(&g.node_count()));
        g.validate(Some(cfg.edge_class_count)).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(g.edge_count() + 1 >= g.node_count());
    }
}

#[test]
fn synth_config_validation() {
    assert!(SynthConfig { min_nodes: 1, ..SynthConfig::default() }.validate().is_err());
    assert!(SynthConfig { noise: -0.1, ..SynthConfig::default() }.validate().is_err());
    assert!(SynthConfig { train_count: 0, ..SynthConfig::default() }.validate().is_err());
    assert!(generate_synthetic(&SynthConfig { min_nodes: 1, max_nodes: 1, ..SynthConfig::default() }).is_err());
}

#[test]
fn rule_helpers() {
    assert_eq!(octant(&[0.1, 0.1, 0.1]), 0);
    assert_eq!(octant(&[0.9, 0.1, 0.6]), 5);
    assert_eq!(degree_bucket(1), 0);
    assert_eq!(degree_bucket(2), 1);
    assert_eq!(degree_bucket(5), 2);
    assert_eq!(rule_node_label(&[0.9, 0.9, 0.9], 4), 23 % 21);
    assert_eq!(synthetic_cow_classes(), vec![2, 5, 8, 11, 14, 17, 20]);
}
