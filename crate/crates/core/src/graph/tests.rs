use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn edge(s: usize, r: usize) -> EdgeRecord {
    EdgeRecord {
        sender: s,
        receiver: r,
        direction: [1.0, 0.0, 0.0],
        distance: 1.0,
        mean_radius: 0.1,
        label: None,
    }
}

fn node(pos: [f64; 3]) -> NodeRecord {
    NodeRecord {
        position: pos,
        radius: 0.1,
        direction: [0.0, 0.0, 1.0],
        label: Some(0),
    }
}

fn path_graph(n: usize) -> VesselGraph {
    VesselGraph {
        nodes: (0..n).map(|i| node([i as f64 * 0.1, 0.0, 0.0])).collect(),
        edges: (1..n).map(|i| edge(i - 1, i)).collect(),
        meta: GraphMeta::default(),
    }
}

#[test]
fn normalize_single_node_and_pair() {
    assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)).unwrap(), Matrix::identity(1));
    let pair = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
    assert_eq!(
        normalize_adjacency(&pair).unwrap(),
        Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]])
    );
}

#[test]
fn normalize_star_matches_entrywise_formula() {
    let star = Matrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let got = normalize_adjacency(&star).unwrap();
    // Entries evaluated to 50 digits: 1/3, 1/sqrt(6), 1/2, 0.
    let third = 0.333_333_333_333_333_33;
    let inv_sqrt6 = 0.408_248_290_463_863_016_366_214_012_450_98;
    let expected = Matrix::from_rows(&[
        [third, inv_sqrt6, inv_sqrt6],
        [inv_sqrt6, 0.5, 0.0],
        [inv_sqrt6, 0.0, 0.5],
    ]);
    assert!(got.max_abs_diff(&expected) < 1e-15);
}

#[test]
fn normalize_rejects_bad_input() {
    assert!(normalize_adjacency(&Matrix::zeros(2, 3)).is_err());
    assert!(normalize_adjacency(&Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]])).is_err());
    assert!(normalize_adjacency(&Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]])).is_err());
    assert!(normalize_adjacency(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]])).is_err());
}

#[test]
fn topology_small_cases() {
    let t = build_topology(&path_graph(2)).unwrap();
    assert_eq!(t.edge_adjacency, Matrix::identity(1));
    assert_eq!(t.node_adjacency, Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));

    let t = build_topology(&path_graph(3)).unwrap();
    assert_eq!(t.edge_adjacency, Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));

    let lone = path_graph(1);
    let t = build_topology(&lone).unwrap();
    assert_eq!(t.edge_adjacency.shape(), (0, 0));
    assert_eq!(t.incidence_in.shape(), (1, 0));

    let empty = VesselGraph { nodes: vec![], edges: vec![], meta: GraphMeta::default() };
    assert!(build_topology(&empty).is_err());
}

#[test]
fn incidence_product_reconstructs_directed_adjacency() {
    for seed in 0..10 {
        let g = random_graph(seed, 8, 11, 4);
        let t = build_topology(&g).unwrap();
        let product = t.incidence_in.matmul(&t.incidence_out.transpose()).unwrap();
        // Brute force: entry (i, j) counts edges with receiver i and sender j.
        let mut expected = Matrix::zeros(8, 8);
        for e in &g.edges {
            expected.set(e.receiver, e.sender, expected.get(e.receiver, e.sender) + 1.0);
        }
        assert_eq!(product, expected);
        for k in 0..g.edges.len() {
            let col_in: f64 = (0..8).map(|i| t.incidence_in.get(i, k)).sum();
            let col_out: f64 = (0..8).map(|i| t.incidence_out.get(i, k)).sum();
            assert_eq!((col_in, col_out), (1.0, 1.0));
        }
    }
}

#[test]
fn topology_invariants_hold() {
    for seed in 0..10 {
        let g = random_graph(seed, 9, 12, 3);
        let t = build_topology(&g).unwrap();
        for a in [&t.node_adjacency, &t.edge_adjacency] {
            assert_eq!(a.max_abs_diff(&a.transpose()), 0.0);
            assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((0..a.rows()).all(|i| a.get(i, i) > 0.0));
        }
    }
}

#[test]
fn line_graph_ignores_edge_direction() {
    let g = random_graph(3, 8, 10, 2);
    let base = build_topology(&g).unwrap();
    let mut flipped = g.clone();
    for e in flipped.edges.iter_mut().step_by(2) {
        std::mem::swap(&mut e.sender, &mut e.receiver);
    }
    let t = build_topology(&flipped).unwrap();
    assert_eq!(t.edge_adjacency, base.edge_adjacency);
    assert_eq!(t.node_adjacency, base.node_adjacency);
}

#[test]
fn normalize_positions_examples() {
    let mut g = path_graph(2);
    g.nodes[0].position = [50.0, 100.0, 25.0];
    g.nodes[1].position = [0.0, 0.0, 0.0];
    let out = normalize_positions(&g, [100.0, 200.0, 50.0]).unwrap();
    assert_eq!(out.nodes[0].position, [0.5, 0.5, 0.5]);
    assert_eq!(out.nodes[1].position, [0.0, 0.0, 0.0]);
    assert!(normalize_positions(&g, [0.0, 1.0, 1.0]).is_err());
    assert!(normalize_positions(&g, [1.0, -2.0, 1.0]).is_err());
}

#[test]
fn augment_identity_and_determinism() {
    let g = random_graph(5, 10, 12, 2);
    assert_eq!(augment_translate(&g, 1, 0.0).unwrap(), g);
    let a = augment_translate(&g, 42, 0.1).unwrap();
    let b = augment_translate(&g, 42, 0.1).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a, g);
    assert_eq!(a.edges, g.edges);
    assert!(augment_translate(&g, 1, -0.1).is_err());
}

#[test]
fn augment_is_rigid_and_bounded() {
    let g = random_graph(6, 12, 14, 2);
    for seed in 0..20 {
        let a = augment_translate(&g, seed, 0.1).unwrap();
        let offset = [0, 1, 2].map(|j| a.nodes[0].position[j] - g.nodes[0].position[j]);
        assert!(offset.iter().all(|o| o.abs() <= 0.1 + 1e-15));
        for (x, y) in a.nodes.iter().zip(&g.nodes) {
            for j in 0..3 {
                assert!((x.position[j] - y.position[j] - offset[j]).abs() < 1e-15);
            }
        }
        let dist = |p: &[f64; 3], q: &[f64; 3]| {
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        };
        for i in 0..g.nodes.len() {
            for j in 0..g.nodes.len() {
                let before = dist(&g.nodes[i].position, &g.nodes[j].position);
                let after = dist(&a.nodes[i].position, &a.nodes[j].position);
                assert!((before - after).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn validate_reports_paths() {
    let mut g = path_graph(3);
    g.edges[1].sender = 3;
    let err = g.validate(None).unwrap_err();
    assert_eq!(err.path, "edges[1].s");
    assert!(err.message.contains("out of bounds"));

    let mut g = path_graph(3);
    g.nodes[2].label = Some(21);
    assert_eq!(g.validate(None).unwrap_err().path, "nodes[2].label");

    let mut g = path_graph(3);
    g.edges[0].label = Some(5);
    assert!(g.validate(None).is_ok());
    assert_eq!(g.validate(Some(5)).unwrap_err().path, "edges[0].label");

    let mut g = path_graph(3);
    g.edges[0].receiver = 0;
    assert!(g.validate(None).is_err());

    let mut g = path_graph(2);
    g.nodes[0].direction = [0.0; 3];
    assert!(g.validate(None).is_ok());
    g.nodes[0].direction = [0.5, 0.0, 0.0];
    assert_eq!(g.validate(None).unwrap_err().path, "nodes[0].dir");
}

#[test]
fn permuted_relabels_consistently() {
    let g = random_graph(7, 6, 7, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut np: Vec<usize> = (0..6).collect();
    np.shuffle(&mut rng);
    let mut ep: Vec<usize> = (0..7).collect();
    ep.shuffle(&mut rng);
    let p = g.permuted(&np, &ep).unwrap();
    for (i, n) in g.nodes.iter().enumerate() {
        assert_eq!(&p.nodes[np[i]], n);
    }
    for (k, e) in g.edges.iter().enumerate() {
        assert_eq!(p.edges[ep[k]].sender, np[e.sender]);
    }
    assert!(g.permuted(&[0, 0, 1, 2, 3, 4], &ep).is_err());
}

fn symmetric_binary(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.4) {
                m.set(i, j, 1.0);
                m.set(j, i, 1.0);
            }
        }
    }
    m
}

proptest! {
    #[test]
    fn normalize_is_symmetric_and_permutation_equivariant(n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = symmetric_binary(n, &mut rng);
        let out = normalize_adjacency(&a).unwrap();
        prop_assert_eq!(out.max_abs_diff(&out.transpose()), 0.0);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut pa = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                pa.set(perm[i], perm[j], a.get(i, j));
            }
        }
        let pout = normalize_adjacency(&pa).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(pout.get(perm[i], perm[j]), out.get(i, j));
            }
        }
    }

    #[test]
    fn normalized_positions_land_in_unit_cube(
        raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..20),
        extents in (1.0f64..512.0, 1.0f64..512.0, 1.0f64..512.0),
    ) {
        let ext = [extents.0, extents.1, extents.2];
        let g = VesselGraph {
            nodes: raw.iter().map(|&(x, y, z)| node([x * ext[0], y * ext[1], z * ext[2]])).collect(),
            edges: vec![],
            meta: GraphMeta::default(),
        };
        let out = normalize_positions(&g, ext).unwrap();
        for n in &out.nodes {
            prop_assert!(n.position.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
