//! Encoder-core-decoder graph convolutional network.
//!
//! Every component is a stack of [`gcn_layer`]s. The encoder's intermediate
//! outputs are average-pooled along the feature axis and concatenated; the
//! core is applied for a fixed number of message-passing rounds, each round
//! reading the encoder output next to its own previous output; the decoder
//! concatenates its intermediates and two linear heads produce node and edge
//! logits.

mod checkpoint;
mod layer;
mod network;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamSet};
use crate::error::{Error, Result};
use crate::graph::{EDGE_FEATURE_WIDTH, NODE_CLASS_COUNT, NODE_FEATURE_WIDTH};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use layer::{gcn_layer, LayerVars, TopologyVars};
pub use network::{
    argmax_rows, core_forward, decoder_forward, encoder_forward, model_forward, FusedFeatures,
    ForwardOutput, GraphInputs,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_depth: usize,
    pub core_depth: usize,
    pub decoder_depth: usize,
    pub hidden_width: usize,
    pub pool_kernel: usize,
    pub message_passing_rounds: usize,
    pub pooling_enabled: bool,
    /// Number of edge classes. Zero means "take it from the dataset".
    pub edge_class_count: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_depth: 2,
            core_depth: 2,
            decoder_depth: 2,
            hidden_width: 32,
            pool_kernel: 2,
            message_passing_rounds: 10,
            pooling_enabled: true,
            edge_class_count: 0,
            seed: 0,
        }
    }
}

/// Input and output widths of one graph convolutional layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub node_in: usize,
    pub edge_in: usize,
    pub node_out: usize,
    pub edge_out: usize,
}

impl LayerShape {
    /// `W_node` also reads the aggregated edge outputs.
    pub fn w_node_shape(&self) -> (usize, usize) {
        (self.node_in + self.edge_out, self.node_out)
    }

    pub fn w_edge_shape(&self) -> (usize, usize) {
        (self.edge_in, self.edge_out)
    }
}

pub fn w_node_name(layer: &str) -> String {
    format!("{layer}.W_node")
}

pub fn w_edge_name(layer: &str) -> String {
    format!("{layer}.W_edge")
}

pub const NODE_HEAD: &str = "node_head";
pub const EDGE_HEAD: &str = "edge_head";

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.encoder_depth >= 1, "encoder_depth must be >= 1"),
            (self.core_depth >= 1, "core_depth must be >= 1"),
            (self.decoder_depth >= 1, "decoder_depth must be >= 1"),
            (self.hidden_width >= 1, "hidden_width must be >= 1"),
            (self.pool_kernel >= 1, "pool_kernel must be >= 1"),
            (self.message_passing_rounds >= 1, "message_passing_rounds must be >= 1"),
            (self.edge_class_count >= 1, "edge_class_count must be >= 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::invalid(format!("model config: {msg}"))),
            None => Ok(()),
        }
    }

    /// Width of one encoder layer's contribution to the fused features.
    pub fn pooled_width(&self) -> usize {
        if self.pooling_enabled {
            self.hidden_width.div_ceil(self.pool_kernel)
        } else {
            self.hidden_width
        }
    }

    /// Width of the encoder's fused node (and edge) features. The core's
    /// output is projected back to this width every round.
    pub fn encoder_fused_width(&self) -> usize {
        self.encoder_depth * self.pooled_width()
    }

    pub fn decoder_fused_width(&self) -> usize {
        self.decoder_depth * self.hidden_width
    }

    pub fn encoder_layer(&self, i: usize) -> LayerShape {
        let h = self.hidden_width;
        let (node_in, edge_in) = if i == 0 {
            (NODE_FEATURE_WIDTH, EDGE_FEATURE_WIDTH)
        } else {
            (h, h)
        };
        LayerShape {
            name: format!("encoder.{i}"),
            node_in,
            edge_in,
            node_out: h,
            edge_out: h,
        }
    }

    pub fn core_layer(&self, i: usize) -> LayerShape {
        let h = self.hidden_width;
        let width = if i == 0 { 2 * self.encoder_fused_width() } else { h };
        LayerShape {
            name: format!("core.{i}"),
            node_in: width,
            edge_in: width,
            node_out: h,
            edge_out: h,
        }
    }

    /// Final layer of each core round, mapping the fused core intermediates
    /// back to the encoder's fused width.
    pub fn core_projection(&self) -> LayerShape {
        let fused = self.core_depth * self.hidden_width;
        let out = self.encoder_fused_width();
        LayerShape {
            name: "core.proj".into(),
            node_in: fused,
            edge_in: fused,
            node_out: out,
            edge_out: out,
        }
    }

    pub fn decoder_layer(&self, i: usize) -> LayerShape {
        let h = self.hidden_width;
        let width = if i == 0 { self.encoder_fused_width() } else { h };
        LayerShape {
            name: format!("decoder.{i}"),
            node_in: width,
            edge_in: width,
            node_out: h,
            edge_out: h,
        }
    }

    /// Every layer in evaluation order.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut out: Vec<LayerShape> = (0..self.encoder_depth).map(|i| self.encoder_layer(i)).collect();
        out.extend((0..self.core_depth).map(|i| self.core_layer(i)));
        out.push(self.core_projection());
        out.extend((0..self.decoder_depth).map(|i| self.decoder_layer(i)));
        out
    }

    /// Every parameter name with its shape, in initialization order.
    pub fn parameter_layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for layer in self.layer_shapes() {
            out.push((w_edge_name(&layer.name), layer.w_edge_shape()));
            out.push((w_node_name(&layer.name), layer.w_node_shape()));
        }
        let h = self.decoder_fused_width();
        out.push((NODE_HEAD.into(), (h, NODE_CLASS_COUNT)));
        out.push((EDGE_HEAD.into(), (h, self.edge_class_count)));
        out
    }
}

/// Learnable weights together with the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: ParamSet,
}

/// `sqrt(6 / (fan_in + fan_out))`
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

impl ModelParams {
    /// Glorot-uniform initialization, deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = ParamSet::new();
        for (name, (rows, cols)) in config.parameter_layout() {
            let bound = glorot_bound(rows, cols);
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            weights.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
        Ok(ModelParams {
            config: config.clone(),
            weights,
        })
    }

    /// Pairs weights with a config after checking every name and shape.
    pub fn from_parts(config: ModelConfig, weights: ParamSet) -> Result<ModelParams> {
        config.validate()?;
        check_layout(&config, &weights)?;
        Ok(ModelParams { config, weights })
    }

    /// All-zero weights; every sigmoid then outputs exactly 0.5.
    pub fn zeros(config: &ModelConfig) -> Result<ModelParams> {
        config.validate()?;
        let weights = config
            .parameter_layout()
            .into_iter()
            .map(|(name, (r, c))| (name, Matrix::zeros(r, c)))
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            weights,
        })
    }
}

pub(crate) fn check_layout(config: &ModelConfig, weights: &ParamSet) -> Result<()> {
    let layout = config.parameter_layout();
    for (name, shape) in &layout {
        let m = weights.require(name)?;
        if m.shape() != *shape {
            return Err(Error::shape(
                "model parameters",
                format!("`{name}` is {}x{}, config expects {}x{}", m.rows(), m.cols(), shape.0, shape.1),
            ));
        }
    }
    if weights.len() != layout.len() {
        let extra = weights
            .names()
            .find(|n| !layout.iter().any(|(l, _)| l == n))
            .unwrap_or_default();
        return Err(Error::invalid(format!("unexpected parameter `{extra}`")));
    }
    Ok(())
}
