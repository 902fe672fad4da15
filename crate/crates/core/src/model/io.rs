//! Model files.
//!
//! A model is stored as a single JSON document:
//!
//! ```text
//! {"schema":"finegrain.model/1","kind":"cbm","attribute_names":[..],
//!  "config":{..},"layers":[{"in_dim":..,"out_dim":..,"weights":[..],"bias":[..]},..],
//!  "aggregator":{"weights":[..],"bias":..,"class_weights":[..,..]}}
//! ```
//!
//! Weights are row-major `out_dim × in_dim`; the last layer holds one row per
//! head. Every float is written as the shortest decimal that parses back to
//! the same 64-bit value, so reloading reproduces scores bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregator::LinearAggregator;
use super::mlp::{MlpConfig, MlpModel};
use super::reward::{ModelKind, RewardModel};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

pub const MODEL_SCHEMA: &str = "finegrain.model/1";

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    kind: ModelKind,
    attribute_names: Vec<String>,
    config: MlpConfig,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aggregator: Option<LinearAggregator>,
}

pub fn model_to_string(model: &RewardModel) -> Result<String> {
    let stage1 = model.stage1();
    let layers = (0..stage1.shapes().len())
        .map(|l| {
            let s = stage1.shapes()[l];
            let (w, b) = stage1.layer(l);
            LayerRecord { in_dim: s.in_dim, out_dim: s.out_dim, weights: w.to_vec(), bias: b.to_vec() }
        })
        .collect();
    let file = ModelFile {
        schema: MODEL_SCHEMA.into(),
        kind: model.kind(),
        attribute_names: model.attribute_names().to_vec(),
        config: stage1.config().clone(),
        layers,
        aggregator: model.stage2().cloned(),
    };
    let mut s = serde_json::to_string(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_str(text: &str) -> Result<RewardModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.schema != MODEL_SCHEMA {
        return Err(Error::invalid(format!("unsupported model schema `{}`", file.schema)));
    }
    let probe = MlpModel::zeros(file.config.clone())?;
    if probe.shapes().len() != file.layers.len() {
        return Err(Error::invalid("layer count does not match config"));
    }
    let mut params = Vec::with_capacity(probe.parameters().len());
    for (shape, layer) in probe.shapes().iter().zip(file.layers) {
        if shape.in_dim != layer.in_dim
            || shape.out_dim != layer.out_dim
            || layer.weights.len() != layer.in_dim * layer.out_dim
            || layer.bias.len() != layer.out_dim
        {
            return Err(Error::invalid("layer shape does not match config"));
        }
        params.extend(layer.weights);
        params.extend(layer.bias);
    }
    let stage1 = MlpModel::from_parameters(file.config, params)?;
    RewardModel::from_parts(file.kind, stage1, file.aggregator, file.attribute_names)
}

pub fn save_model(model: &RewardModel, path: &Path) -> Result<()> {
    write_atomic(path, model_to_string(model)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<RewardModel> {
    model_from_str(&read_to_string(path)?)
}
