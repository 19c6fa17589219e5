//! Graph files, dataset manifests and the synthetic dataset generator.

pub mod synth;

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_positions, VesselGraph, NODE_CLASS_COUNT};

pub use synth::{generate_synthetic, write_synthetic, SynthConfig};

/// How node positions in the graph files relate to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtentsPolicy {
    /// Positions are already normalized.
    #[default]
    AsIs,
    /// Positions are raw image coordinates; divide by `meta.extents` on load.
    Normalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Paths relative to the manifest's directory. A `.jsonl` path holds one
    /// graph per line.
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub node_classes: Vec<String>,
    pub edge_classes: Vec<String>,
    pub cow_class_ids: Vec<usize>,
    #[serde(default)]
    pub extents_policy: ExtentsPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.node_classes.len() != NODE_CLASS_COUNT {
            return Err(Error::invalid(format!(
                "manifest lists {} node classes, expected {NODE_CLASS_COUNT}",
                self.node_classes.len()
            )));
        }
        if self.edge_classes.is_empty() {
            return Err(Error::invalid("manifest lists no edge classes"));
        }
        if self.cow_class_ids.is_empty() {
            return Err(Error::invalid("manifest lists no circle-of-Willis classes"));
        }
        if let Some(id) = self.cow_class_ids.iter().find(|&&c| c >= NODE_CLASS_COUNT) {
            return Err(Error::invalid(format!("circle-of-Willis class {id} is not a node class")));
        }
        let mut seen: HashSet<&Path> = HashSet::new();
        for p in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(p.as_path()) {
                return Err(Error::invalid(format!("`{}` appears in more than one split entry", p.display())));
            }
        }
        Ok(())
    }

    pub fn edge_class_count(&self) -> usize {
        self.edge_classes.len()
    }

    pub fn cow_classes(&self) -> BTreeSet<usize> {
        self.cow_class_ids.iter().copied().collect()
    }

    pub fn split(&self, split: Split) -> &[PathBuf] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// A manifest together with its loaded, validated graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<VesselGraph>,
    pub val: Vec<VesselGraph>,
    pub test: Vec<VesselGraph>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[VesselGraph] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Writes `manifest.json` and every graph at its manifest path.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.manifest.validate()?;
        for (paths, graphs) in [
            (&self.manifest.train, &self.train),
            (&self.manifest.val, &self.val),
            (&self.manifest.test, &self.test),
        ] {
            if paths.len() != graphs.len() {
                return Err(Error::invalid("manifest paths and graphs differ in count"));
            }
            for (p, g) in paths.iter().zip(graphs) {
                let full = dir.join(p);
                if let Some(parent) = full.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                save_graph(&full, g)?;
            }
        }
        write_json(&dir.join("manifest.json"), &self.manifest)
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses JSON, reporting schema violations with their location.
fn parse_located<T: DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| Error::Schema {
        file: file.to_owned(),
        path: err.path().to_string(),
        message: err.inner().to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_located(&read_text(path)?, &display(path))
}

pub fn graph_to_json(graph: &VesselGraph) -> String {
    let mut text = serde_json::to_string_pretty(graph).expect("graph serializes");
    text.push('\n');
    text
}

pub fn save_graph(path: &Path, graph: &VesselGraph) -> Result<()> {
    std::fs::write(path, graph_to_json(graph)).map_err(|e| Error::io(path, e))
}

fn checked(graph: VesselGraph, file: &str, prefix: &str, edge_class_count: Option<usize>) -> Result<VesselGraph> {
    graph.validate(edge_class_count).map_err(|bad| Error::Schema {
        file: file.to_owned(),
        path: format!("{prefix}{}", bad.path),
        message: bad.message,
    })?;
    Ok(graph)
}

/// Reads one graph document and enforces every graph invariant.
pub fn load_graph(path: &Path, edge_class_count: Option<usize>) -> Result<VesselGraph> {
    let file = display(path);
    let graph: VesselGraph = parse_located(&read_text(path)?, &file)?;
    checked(graph, &file, "", edge_class_count)
}

/// Reads a graph file: a single document, or one graph per line for `.jsonl`.
pub fn load_graphs(path: &Path, edge_class_count: Option<usize>) -> Result<Vec<VesselGraph>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let file = display(path);
        read_text(path)?
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                let graph: VesselGraph = parse_located(line, &format!("{file}:{}", i + 1))?;
                checked(graph, &format!("{file}:{}", i + 1), "", edge_class_count)
            })
            .collect()
    } else {
        Ok(vec![load_graph(path, edge_class_count)?])
    }
}

fn load_split(base: &Path, paths: &[PathBuf], manifest: &DatasetManifest) -> Result<Vec<VesselGraph>> {
    let mut out = Vec::new();
    for p in paths {
        for g in load_graphs(&base.join(p), Some(manifest.edge_class_count()))? {
            out.push(match manifest.extents_policy {
                ExtentsPolicy::AsIs => g,
                ExtentsPolicy::Normalize => normalize_positions(&g, g.meta.extents)?,
            });
        }
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = read_json(path)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads every split listed in a manifest, in listed order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(Dataset {
        train: load_split(base, &manifest.train, &manifest)?,
        val: load_split(base, &manifest.val, &manifest)?,
        test: load_split(base, &manifest.test, &manifest)?,
        manifest,
    })
}

/// Loads a single split only.
pub fn load_split_graphs(manifest_path: &Path, split: Split) -> Result<(DatasetManifest, Vec<VesselGraph>)> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let graphs = load_split(base, manifest.split(split), &manifest)?;
    Ok((manifest, graphs))
}

#[cfg(test)]
mod tests;
