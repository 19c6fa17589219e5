use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EdgeRecord, GraphMeta, NodeRecord, VesselGraph, NODE_CLASS_COUNT};

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (len > 1e-12).then(|| [v[0] / len, v[1] / len, v[2] / len])
}

/// Connected graph with `node_count` nodes and `edge_count` distinct edges,
/// random geometry in the unit cube and uniformly random labels.
///
/// Starts from a random spanning tree and adds extra node pairs until the
/// edge count is reached, so `edge_count` must lie in
/// `node_count - 1 ..= node_count (node_count - 1) / 2`.
pub fn random_graph(seed: u64, node_count: usize, edge_count: usize, edge_class_count: usize) -> VesselGraph {
    assert!(node_count >= 1);
    assert!(edge_count + 1 >= node_count && edge_count <= node_count * (node_count - 1) / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<[f64; 3]> = (0..node_count)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edge_count);
    let mut order: Vec<usize> = (0..node_count).collect();
    order.shuffle(&mut rng);
    for i in 1..node_count {
        let parent = order[rng.gen_range(0..i)];
        pairs.push((parent, order[i]));
    }
    while pairs.len() < edge_count {
        let a = rng.gen_range(0..node_count);
        let b = rng.gen_range(0..node_count);
        if a != b && !pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            pairs.push((a, b));
        }
    }

    let radii: Vec<f64> = (0..node_count).map(|_| rng.gen_range(0.005..0.03)).collect();
    let edges: Vec<EdgeRecord> = pairs
        .iter()
        .map(|&(s, r)| {
            let d = [0, 1, 2].map(|j| positions[r][j] - positions[s][j]);
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            EdgeRecord {
                sender: s,
                receiver: r,
                direction: unit(d).expect("distinct random points"),
                distance: dist,
                mean_radius: 0.5 * (radii[s] + radii[r]),
                label: Some(rng.gen_range(0..edge_class_count.max(1))),
            }
        })
        .collect();

    let nodes = (0..node_count)
        .map(|i| {
            let mut t = [0.0; 3];
            for e in &edges {
                let sign = if e.sender == i { 1.0 } else if e.receiver == i { -1.0 } else { continue };
                for j in 0..3 {
                    t[j] += sign * e.direction[j];
                }
            }
            NodeRecord {
                position: positions[i],
                radius: radii[i],
                direction: unit(t).unwrap_or([0.0; 3]),
                label: Some(rng.gen_range(0..NODE_CLASS_COUNT)),
            }
        })
        .collect();

    VesselGraph {
        nodes,
        edges,
        meta: GraphMeta {
            extents: [1.0; 3],
            scan_id: format!("random-{seed}"),
        },
    }
}
