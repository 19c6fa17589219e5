//! Synthetic vessel-like graphs with labels that are a deterministic function
//! of geometry and topology.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetManifest, ExtentsPolicy};
use crate::error::{Error, Result};
use crate::graph::{EdgeRecord, GraphMeta, NodeRecord, VesselGraph, NODE_CLASS_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Extra non-tree edges per node, closing loops between nearby branches.
    pub cross_edge_rate: f64,
    /// Octant territories per graph, joined by trunk segments.
    pub min_regions: usize,
    pub max_regions: usize,
    /// Branch segment length range in normalized units.
    pub min_step: f64,
    pub max_step: f64,
    /// Nodes keep at least this distance from the octant boundary planes.
    pub boundary_margin: f64,
    /// Fraction of nodes whose label is replaced by a different random class.
    pub noise: f64,
    pub edge_class_count: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_count: 20,
            val_count: 5,
            test_count: 5,
            min_nodes: 12,
            max_nodes: 24,
            cross_edge_rate: 0.08,
            min_regions: 2,
            max_regions: 4,
            min_step: 0.04,
            max_step: 0.1,
            boundary_margin: 0.3,
            noise: 0.0,
            edge_class_count: 8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_nodes < 2 {
            return Err(Error::invalid("synthetic graphs need at least 2 nodes"));
        }
        if self.max_nodes < self.min_nodes {
            return Err(Error::invalid("max_nodes is below min_nodes"));
        }
        if self.train_count < 1 || self.val_count < 1 || self.test_count < 1 {
            return Err(Error::invalid("every split needs at least one graph"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid("noise must lie in [0, 1]"));
        }
        if !(self.cross_edge_rate >= 0.0) {
            return Err(Error::invalid("cross_edge_rate must be >= 0"));
        }
        if !(self.min_step > 0.0 && self.max_step >= self.min_step) {
            return Err(Error::invalid("step range must be positive and ordered"));
        }
        if !(1..=8).contains(&self.min_regions) || !(self.min_regions..=8).contains(&self.max_regions) {
            return Err(Error::invalid("region range must be ordered within [1, 8]"));
        }
        if !(0.0..0.4).contains(&self.boundary_margin) {
            return Err(Error::invalid("boundary_margin must lie in [0, 0.4)"));
        }
        if self.edge_class_count < 1 {
            return Err(Error::invalid("edge_class_count must be >= 1"));
        }
        Ok(())
    }
}

/// Octant of a normalized position, 0..8.
pub fn octant(position: &[f64; 3]) -> usize {
    position
        .iter()
        .enumerate()
        .map(|(axis, &p)| usize::from(p >= 0.5) << axis)
        .sum()
}

/// 0 for endings, 1 for pass-through nodes, 2 for bifurcations.
pub fn degree_bucket(degree: usize) -> usize {
    degree.clamp(1, 3) - 1
}

/// Node class assigned by the synthetic labeling rule.
pub fn rule_node_label(position: &[f64; 3], degree: usize) -> usize {
    (octant(position) * 3 + degree_bucket(degree)) % NODE_CLASS_COUNT
}

/// Edge class derived from its endpoint classes.
pub fn rule_edge_label(sender_label: usize, receiver_label: usize, edge_class_count: usize) -> usize {
    (3 * sender_label + 5 * receiver_label) % edge_class_count
}

/// Bifurcation classes stand in for circle-of-Willis nodes.
pub fn synthetic_cow_classes() -> Vec<usize> {
    let mut ids: Vec<usize> = (0..8).map(|o| (o * 3 + 2) % NODE_CLASS_COUNT).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

pub fn degrees(graph: &VesselGraph) -> Vec<usize> {
    let mut deg = vec![0; graph.nodes.len()];
    for e in &graph.edges {
        deg[e.sender] += 1;
        deg[e.receiver] += 1;
    }
    deg
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn length(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let len = length(&v);
        if len > 1e-3 && len <= 1.0 {
            return v.map(|c| c / len);
        }
    }
}

/// One graph: a few vessel territories, each a tree of short segments that
/// stays inside one octant, joined by long trunk segments, plus a few
/// loop-closing edges between nearby nodes.
pub fn generate_graph(config: &SynthConfig, rng: &mut ChaCha8Rng, scan_id: String) -> VesselGraph {
    let n = rng.gen_range(config.min_nodes..=config.max_nodes);
    let regions = rng.gen_range(config.min_regions..=config.max_regions).min(n);
    let mut octants: Vec<usize> = (0..8).collect();
    octants.shuffle(rng);

    // Territory roots sit mid-way between the margin band and the cube face.
    let jitter = 0.1 * (0.5 - config.boundary_margin);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (k, &o) in octants[..regions].iter().enumerate() {
        let root = std::array::from_fn(|axis| {
            let offset = 0.25 + 0.5 * config.boundary_margin + rng.gen_range(-jitter..jitter);
            if o >> axis & 1 == 1 {
                0.5 + offset
            } else {
                0.5 - offset
            }
        });
        positions.push(root);
        if k == 0 {
            radii.push(rng.gen_range(0.02..0.03));
        } else {
            let parent = rng.gen_range(0..k);
            radii.push(radii[parent] * rng.gen_range(0.75..0.98));
            pairs.push((parent, k));
        }
    }
    while positions.len() < n {
        let parent = rng.gen_range(0..positions.len());
        let dir = random_unit(rng);
        let step = rng.gen_range(config.min_step..=config.max_step);
        let child: [f64; 3] = std::array::from_fn(|j| (positions[parent][j] + step * dir[j]).clamp(0.0, 1.0));
        let near_boundary = child.iter().any(|&c| (c - 0.5).abs() < config.boundary_margin);
        if near_boundary
            || octant(&child) != octant(&positions[parent])
            || positions.iter().any(|p| length(&sub(p, &child)) < 1e-6)
        {
            continue;
        }
        radii.push(radii[parent] * rng.gen_range(0.75..0.98));
        positions.push(child);
        pairs.push((parent, positions.len() - 1));
    }

    let cross = (config.cross_edge_rate * n as f64).round() as usize;
    let mut attempts = 0;
    let mut added = 0;
    while added < cross && attempts < 50 * (cross + 1) {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let connected = pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
        if a == b || connected || length(&sub(&positions[a], &positions[b])) > 2.0 * config.max_step {
            continue;
        }
        pairs.push((a, b));
        added += 1;
    }

    let edges: Vec<EdgeRecord> = pairs
        .iter()
        .map(|&(s, r)| {
            let d = sub(&positions[r], &positions[s]);
            let dist = length(&d);
            EdgeRecord {
                sender: s,
                receiver: r,
                direction: d.map(|c| c / dist),
                distance: dist,
                mean_radius: 0.5 * (radii[s] + radii[r]),
                label: None,
            }
        })
        .collect();

    let nodes = (0..n)
        .map(|i| {
            let mut t = [0.0; 3];
            for e in edges.iter().filter(|e| e.sender == i || e.receiver == i) {
                for j in 0..3 {
                    t[j] += e.direction[j];
                }
            }
            let len = length(&t);
            NodeRecord {
                position: positions[i],
                radius: radii[i],
                direction: if len > 1e-9 { t.map(|c| c / len) } else { [0.0; 3] },
                label: None,
            }
        })
        .collect();

    let mut graph = VesselGraph {
        nodes,
        edges,
        meta: GraphMeta {
            extents: [1.0; 3],
            scan_id,
        },
    };
    apply_labels(&mut graph, config, rng);
    graph
}

fn apply_labels(graph: &mut VesselGraph, config: &SynthConfig, rng: &mut ChaCha8Rng) {
    let deg = degrees(graph);
    for (node, &d) in graph.nodes.iter_mut().zip(&deg) {
        let mut label = rule_node_label(&node.position, d);
        if config.noise > 0.0 && rng.gen_bool(config.noise) {
            label = (label + rng.gen_range(1..NODE_CLASS_COUNT)) % NODE_CLASS_COUNT;
        }
        node.label = Some(label);
    }
    for e in &mut graph.edges {
        let (s, r) = (graph.nodes[e.sender].label.unwrap(), graph.nodes[e.receiver].label.unwrap());
        e.label = Some(rule_edge_label(s, r, config.edge_class_count));
    }
}

pub fn node_class_names() -> Vec<String> {
    (0..NODE_CLASS_COUNT).map(|c| format!("node_{c:02}")).collect()
}

pub fn edge_class_names(count: usize) -> Vec<String> {
    (0..count).map(|c| format!("edge_{c:02}")).collect()
}

/// Builds all three splits in memory.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut split = |name: &str, count: usize| -> Vec<VesselGraph> {
        (0..count)
            .map(|i| generate_graph(config, &mut rng, format!("synth-{name}-{i:03}")))
            .collect()
    };
    let train = split("train", config.train_count);
    let val = split("val", config.val_count);
    let test = split("test", config.test_count);
    let paths = |name: &str, count: usize| (0..count).map(|i| format!("{name}/{i:03}.json").into()).collect();
    let manifest = DatasetManifest {
        train: paths("train", config.train_count),
        val: paths("val", config.val_count),
        test: paths("test", config.test_count),
        node_classes: node_class_names(),
        edge_classes: edge_class_names(config.edge_class_count),
        cow_class_ids: synthetic_cow_classes(),
        extents_policy: ExtentsPolicy::AsIs,
    };
    Ok(Dataset {
        manifest,
        train,
        val,
        test,
    })
}

/// Generates a dataset and writes `manifest.json` plus one file per graph
/// under `out_dir`.
pub fn write_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<Dataset> {
    let dataset = generate_synthetic(config)?;
    dataset.save(out_dir)?;
    Ok(dataset)
}
