//! The `vessel-gcn` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{Averaging, ClassNames, GraphPrediction, MetricsReport, PredictionSet};
use crate::graph::{normalize_positions, random_graph, VesselGraph};
use crate::io::{
    load_dataset, load_graphs, load_split_graphs, read_json, write_json, write_synthetic, DatasetManifest,
    ExtentsPolicy, Split, SynthConfig,
};
use crate::model::{GraphInputs, ModelConfig, ModelParams};
use crate::training::{gradient_check, log_to_jsonl, predict_set, train, TrainConfig};

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
/// `gradcheck` ran but some error reached the tolerance.
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
const GRADCHECK_STEP: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "vessel-gcn", version, about = "Label vessel graph nodes and edges with a fused-feature GCN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Train a model and keep the checkpoint with the best validation accuracy.
    Train(TrainArgs),
    /// Print evaluation metrics as JSON.
    Eval(EvalArgs),
    /// Write a copy of a graph file with predicted labels.
    Predict(PredictArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator settings (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for `manifest.json` and the graph files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Model settings (JSON). An `edge_class_count` of 0 is taken from the manifest.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Training settings (JSON).
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// Checkpoint path, rewritten at every new best epoch.
    #[arg(long)]
    out: PathBuf,
    /// Training log (JSON lines). Defaults to the checkpoint path with a
    /// `.log.jsonl` extension.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExtentsArg {
    AsIs,
    Normalize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset manifest holding the ground truth.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    ckpt: Option<PathBuf>,
    /// Directory of predicted graph files laid out like the manifest paths,
    /// as written by `predict`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// How per-class precision and recall are combined.
    #[arg(long, value_enum, default_value = "macro")]
    averaging: AveragingArg,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Graph file (`.json`, or `.jsonl` with one graph per line).
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Output file, written in the same format as the input.
    #[arg(long)]
    out: PathBuf,
    /// Whether positions must be divided by `meta.extents` before inference.
    /// The written file keeps the original positions.
    #[arg(long, value_enum, default_value = "as-is")]
    extents: ExtentsArg,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model settings (JSON); the default architecture when omitted.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    #[arg(long, default_value_t = 9)]
    edges: usize,
    /// Edge classes used when the model settings leave them unset.
    #[arg(long, default_value_t = 4)]
    edge_classes: usize,
}

/// Runs the CLI with explicit arguments and output streams; returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => return report_usage(err, stdout, stderr),
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a, stdout),
        Command::Train(a) => train_cmd(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::Predict(a) => predict(a, stdout),
        Command::Gradcheck(a) => gradcheck(a, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(stderr, "{}", error_json(&err));
            EXIT_ERROR
        }
    }
}

fn report_usage(err: clap::Error, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    use clap::error::ErrorKind;
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = write!(stdout, "{}", err.render());
            0
        }
        _ => {
            let text = err.render().to_string();
            let message = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_owned();
            let doc = json!({ "error": message, "kind": "usage", "usage": text.trim_end() });
            let _ = writeln!(stderr, "{doc}");
            EXIT_USAGE
        }
    }
}

/// The `{"error": ...}` document printed for a failed command.
pub fn error_json(err: &Error) -> serde_json::Value {
    let kind = match err {
        Error::Shape { .. } => "shape",
        Error::Validation(_) => "validation",
        Error::Schema { .. } => "schema",
        Error::NonFiniteLoss { .. } => "non_finite_loss",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
    };
    let mut doc = json!({ "error": err.to_string(), "kind": kind });
    if let Error::Schema { file, path, message } = err {
        doc["file"] = json!(file);
        doc["path"] = json!(path);
        doc["message"] = json!(message);
    }
    doc
}

fn print_json(stdout: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn read_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn synth(args: SynthArgs, stdout: &mut dyn Write) -> Result<i32> {
    let config: SynthConfig = read_or_default(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let dataset = write_synthetic(&config, &args.out)?;
    print_json(
        stdout,
        &json!({
            "manifest": args.out.join("manifest.json"),
            "train": dataset.train.len(),
            "val": dataset.val.len(),
            "test": dataset.test.len(),
        }),
    )?;
    Ok(0)
}

fn resolve_model_config(mut config: ModelConfig, manifest: &DatasetManifest) -> Result<ModelConfig> {
    let classes = manifest.edge_class_count();
    if config.edge_class_count == 0 {
        config.edge_class_count = classes;
    } else if config.edge_class_count != classes {
        return Err(Error::invalid(format!(
            "model config has {} edge classes but the manifest lists {classes}",
            config.edge_class_count
        )));
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(args: TrainArgs, stdout: &mut dyn Write) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let model_config = resolve_model_config(read_or_default(args.model_config.as_deref())?, &dataset.manifest)?;
    let train_config: TrainConfig = read_or_default(args.train_config.as_deref())?;
    let log_path = args.log.unwrap_or_else(|| args.out.with_extension("log.jsonl"));

    let outcome = train(&dataset.train, &dataset.val, &model_config, &train_config, |params, _| {
        params.save(&args.out)
    })?;
    std::fs::write(&log_path, log_to_jsonl(&outcome.log)).map_err(|e| Error::io(&log_path, e))?;
    print_json(
        stdout,
        &json!({
            "checkpoint": args.out,
            "log": log_path,
            "epochs": outcome.log.len(),
            "best_epoch": outcome.best_epoch,
            "best_val_node_acc": outcome.best_val_node_acc,
        }),
    )?;
    Ok(0)
}

fn eval(args: EvalArgs, stdout: &mut dyn Write) -> Result<i32> {
    let split = Split::from(args.split);
    let (manifest, truth) = load_split_graphs(&args.data, split)?;
    let set = match (&args.ckpt, &args.predictions) {
        (Some(ckpt), _) => {
            let params = ModelParams::load(ckpt)?;
            check_edge_classes(&params, &manifest)?;
            let inputs = truth.iter().map(GraphInputs::from_graph).collect::<Result<Vec<_>>>()?;
            predict_set(&params, &truth, &inputs)?
        }
        (None, Some(dir)) => {
            let mut predicted = Vec::with_capacity(truth.len());
            for p in manifest.split(split) {
                predicted.extend(load_graphs(&dir.join(p), Some(manifest.edge_class_count()))?);
            }
            pair_predictions(&truth, &predicted)?
        }
        (None, None) => return Err(Error::invalid("eval needs --ckpt or --predictions")),
    };
    let averaging = match args.averaging {
        AveragingArg::Macro => Averaging::Macro,
        AveragingArg::Micro => Averaging::Micro,
    };
    let names = ClassNames {
        node: &manifest.node_classes,
        edge: &manifest.edge_classes,
    };
    let report = MetricsReport::compute(&set, &manifest.cow_classes(), averaging, &names)?;
    print_json(stdout, &report)?;
    Ok(0)
}

fn check_edge_classes(params: &ModelParams, manifest: &DatasetManifest) -> Result<()> {
    if params.config.edge_class_count != manifest.edge_class_count() {
        return Err(Error::invalid(format!(
            "checkpoint predicts {} edge classes but the manifest lists {}",
            params.config.edge_class_count,
            manifest.edge_class_count()
        )));
    }
    Ok(())
}

fn pair_predictions(truth: &[VesselGraph], predicted: &[VesselGraph]) -> Result<PredictionSet> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} predicted graphs for {} ground-truth graphs",
            predicted.len(),
            truth.len()
        )));
    }
    let mut out = Vec::with_capacity(truth.len());
    for (t, p) in truth.iter().zip(predicted) {
        let same_shape = t.node_count() == p.node_count()
            && t.edge_count() == p.edge_count()
            && t.edges.iter().zip(&p.edges).all(|(a, b)| (a.sender, a.receiver) == (b.sender, b.receiver));
        if !same_shape || t.meta.scan_id != p.meta.scan_id {
            return Err(Error::invalid(format!(
                "predicted graph `{}` does not match ground truth `{}`",
                p.meta.scan_id, t.meta.scan_id
            )));
        }
        let unlabeled = |what: &str| Error::invalid(format!("graph `{}` has unlabeled {what}", t.meta.scan_id));
        out.push(GraphPrediction {
            scan_id: t.meta.scan_id.clone(),
            node_pred: p.node_labels().ok_or_else(|| unlabeled("predicted nodes"))?,
            node_true: t.node_labels().ok_or_else(|| unlabeled("nodes"))?,
            edge_pred: p.edge_labels().ok_or_else(|| unlabeled("predicted edges"))?,
            edge_true: t.edge_labels().ok_or_else(|| unlabeled("edges"))?,
        });
    }
    PredictionSet::new(out)
}

/// `graph` with every label replaced by the model's prediction.
pub fn predict_graph(params: &ModelParams, graph: &VesselGraph, extents: ExtentsPolicy) -> Result<VesselGraph> {
    let inputs = match extents {
        ExtentsPolicy::AsIs => GraphInputs::from_graph(graph)?,
        ExtentsPolicy::Normalize => GraphInputs::from_graph(&normalize_positions(graph, graph.meta.extents)?)?,
    };
    let (node_pred, edge_pred) = params.predict(&inputs)?;
    let mut out = graph.clone();
    for (n, l) in out.nodes.iter_mut().zip(node_pred) {
        n.label = Some(l);
    }
    for (e, l) in out.edges.iter_mut().zip(edge_pred) {
        e.label = Some(l);
    }
    Ok(out)
}

fn predict(args: PredictArgs, stdout: &mut dyn Write) -> Result<i32> {
    let params = ModelParams::load(&args.ckpt)?;
    let extents = match args.extents {
        ExtentsArg::AsIs => ExtentsPolicy::AsIs,
        ExtentsArg::Normalize => ExtentsPolicy::Normalize,
    };
    let graphs = load_graphs(&args.graph, None)?;
    let predicted = graphs
        .iter()
        .map(|g| predict_graph(&params, g, extents))
        .collect::<Result<Vec<_>>>()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    if args.graph.extension().is_some_and(|e| e == "jsonl") {
        let mut text = String::new();
        for g in &predicted {
            text.push_str(&serde_json::to_string(g)?);
            text.push('\n');
        }
        std::fs::write(&args.out, text).map_err(|e| Error::io(&args.out, e))?;
    } else {
        write_json(&args.out, &predicted[0])?;
    }
    print_json(stdout, &json!({ "out": args.out, "graphs": predicted.len() }))?;
    Ok(0)
}

fn gradcheck(args: GradcheckArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut config: ModelConfig = read_or_default(args.model_config.as_deref())?;
    if config.edge_class_count == 0 {
        config.edge_class_count = args.edge_classes;
    }
    config.validate()?;
    let max_edges = args.nodes * args.nodes.saturating_sub(1) / 2;
    if args.nodes < 1 || args.edges + 1 < args.nodes || args.edges > max_edges {
        return Err(Error::invalid(format!(
            "a connected simple graph on {} nodes needs between {} and {max_edges} edges",
            args.nodes,
            args.nodes.saturating_sub(1)
        )));
    }
    let graph = random_graph(args.seed, args.nodes, args.edges, config.edge_class_count);
    let params = ModelParams::init(&config, args.seed)?;
    let errors = gradient_check(&graph, &params, &TrainConfig::default(), GRADCHECK_STEP)?;

    let width = errors.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("parameter".len());
    let mut text = format!("{:<width$}  worst_rel_err\n", "parameter");
    for (name, err) in &errors {
        text.push_str(&format!("{name:<width$}  {err:.3e}\n"));
    }
    let worst = errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let passed = worst < GRADCHECK_TOLERANCE;
    text.push_str(&format!(
        "worst {worst:.3e} {} tolerance {GRADCHECK_TOLERANCE:e}\n",
        if passed { "<" } else { ">=" }
    ));
    stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(if passed { 0 } else { EXIT_CHECK_FAILED })
}
