//! Multi-headed MLP used as the attribute predictor and as the coarse model.
//!
//! The trunk is a stack of affine + ReLU layers shared by every head. Each head
//! is one row of the final affine layer followed by a sigmoid. All parameters
//! live in one flat buffer; [`LayerShape`] records where each layer's weights
//! (row-major, `out × in`) and biases sit inside it.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::linalg::{bce_with_logit, matmul_ab, matmul_abt, matmul_atb, sigmoid};
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::rng::rng_for;

fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}
fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    pub n_heads: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Per-head loss weights; `None` averages the heads uniformly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_weights: Option<Vec<f64>>,
}

impl MlpConfig {
    /// Two 256-unit hidden layers, lr 1e-4, 100 epochs, batch 128, Adam.
    pub fn new(input_dim: usize, n_heads: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: default_hidden(),
            n_heads,
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            optimizer: OptimizerKind::default(),
            head_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_heads == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("all MLP dimensions must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if let Some(w) = &self.head_weights {
            if w.len() != self.n_heads {
                return Err(Error::invalid("head_weights length must equal n_heads"));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid("head weights must be nonnegative with positive sum"));
            }
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.n_heads));
        dims
    }

    fn normalized_head_weights(&self) -> Vec<f64> {
        match &self.head_weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / self.n_heads as f64; self.n_heads],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

fn layout(config: &MlpConfig) -> (Vec<LayerShape>, usize) {
    let mut offset = 0;
    let shapes = config
        .layer_dims()
        .into_iter()
        .map(|(i, o)| {
            let shape = LayerShape {
                in_dim: i,
                out_dim: o,
                weight_offset: offset,
                bias_offset: offset + i * o,
            };
            offset += i * o + o;
            shape
        })
        .collect();
    (shapes, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Gradient of the loss with respect to every parameter, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    shapes: Vec<LayerShape>,
    values: Vec<f64>,
}

impl MlpGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `(weights, biases)` of layer `idx`; the last layer holds the heads.
    pub fn layer(&self, idx: usize) -> (&[f64], &[f64]) {
        let s = &self.shapes[idx];
        (
            &self.values[s.weight_offset..s.bias_offset],
            &self.values[s.bias_offset..s.bias_offset + s.out_dim],
        )
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Per-epoch mean training loss, recorded before each epoch's updates are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

impl MlpModel {
    /// He-uniform weights for every layer, zero biases, seeded from `config.seed`.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let (shapes, total) = layout(&config);
        let mut params = vec![0.0; total];
        let mut rng = rng_for(config.seed, "mlp-init");
        for s in &shapes {
            let limit = (6.0 / s.in_dim as f64).sqrt();
            for w in &mut params[s.weight_offset..s.bias_offset] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(Self { config, shapes, params })
    }

    /// All weights and biases zero.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let (shapes, total) = layout(&config);
        Ok(Self { config, shapes, params: vec![0.0; total] })
    }

    /// Rebuild a model from a flat parameter buffer (see [`MlpModel::parameters`]).
    pub fn from_parameters(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (shapes, total) = layout(&config);
        if params.len() != total {
            return Err(Error::invalid(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { config, shapes, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn n_heads(&self) -> usize {
        self.config.n_heads
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, biases)` of layer `idx`.
    pub fn layer(&self, idx: usize) -> (&[f64], &[f64]) {
        let s = &self.shapes[idx];
        (
            &self.params[s.weight_offset..s.bias_offset],
            &self.params[s.bias_offset..s.bias_offset + s.out_dim],
        )
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.config.input_dim {
            return Err(Error::InputDimension {
                expected: self.config.input_dim,
                found: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model input"));
        }
        Ok(())
    }

    /// Head logits for one input.
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let acts = self.forward_rows(input, 1);
        Ok(acts.last().cloned().unwrap_or_default())
    }

    /// One sigmoid probability per head.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(input)?.into_iter().map(sigmoid).collect())
    }

    /// Probabilities for many inputs; row `i` of the result belongs to `inputs[i]`.
    pub fn forward_many(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for x in inputs {
            self.check_input(x)?;
        }
        let heads = self.config.n_heads;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(256) {
            let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
            let acts = self.forward_rows(&flat, chunk.len());
            let logits = acts.last().expect("at least one layer");
            out.extend(
                logits
                    .chunks(heads)
                    .map(|row| row.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>()),
            );
        }
        Ok(out)
    }

    /// Forward pass over `rows` stacked inputs. Returns the input followed by
    /// each layer's output (ReLU applied on trunk layers, raw logits last).
    fn forward_rows(&self, input: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.shapes.len() + 1);
        acts.push(input.to_vec());
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let (w, b) = self.layer(l);
            let mut z = vec![0.0; rows * s.out_dim];
            matmul_abt(&acts[l], w, &mut z, rows, s.in_dim, s.out_dim);
            for row in z.chunks_mut(s.out_dim) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if l < last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Weighted mean over heads of the binary cross-entropy for one example.
    pub fn loss(&self, input: &[f64], labels: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        self.check_labels(labels)?;
        let logits = self.logits(input)?;
        let weights = self.config.normalized_head_weights();
        Ok(logits
            .iter()
            .zip(labels)
            .zip(&weights)
            .map(|((&z, &y), &w)| w * bce_with_logit(z, y))
            .sum())
    }

    fn check_labels(&self, labels: &[f64]) -> Result<()> {
        if labels.len() != self.config.n_heads {
            return Err(Error::InputDimension {
                expected: self.config.n_heads,
                found: labels.len(),
            });
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("labels"));
        }
        Ok(())
    }

    /// Exact gradient of [`MlpModel::loss`] for one example.
    pub fn gradient(&self, input: &[f64], labels: &[f64]) -> Result<MlpGradient> {
        self.check_input(input)?;
        self.check_labels(labels)?;
        let (_, values) = self.batch_loss_and_gradient(input, labels, 1);
        Ok(MlpGradient { shapes: self.shapes.clone(), values })
    }

    /// Mean loss and its gradient over `rows` stacked examples.
    fn batch_loss_and_gradient(&self, inputs: &[f64], labels: &[f64], rows: usize) -> (f64, Vec<f64>) {
        let heads = self.config.n_heads;
        let weights = self.config.normalized_head_weights();
        let acts = self.forward_rows(inputs, rows);
        let logits = acts.last().expect("at least one layer");

        let inv_rows = 1.0 / rows as f64;
        let mut loss = 0.0;
        let mut delta = vec![0.0; rows * heads];
        for ((d, (&z, &y)), h) in delta
            .iter_mut()
            .zip(logits.iter().zip(labels))
            .zip((0..heads).cycle())
        {
            loss += weights[h] * bce_with_logit(z, y);
            *d = weights[h] * (sigmoid(z) - y) * inv_rows;
        }
        loss *= inv_rows;

        let mut grad = vec![0.0; self.params.len()];
        for l in (0..self.shapes.len()).rev() {
            let s = self.shapes[l];
            let input_act = &acts[l];
            matmul_atb(
                &delta,
                input_act,
                &mut grad[s.weight_offset..s.bias_offset],
                s.out_dim,
                rows,
                s.in_dim,
                1.0,
                0.0,
            );
            let gb = &mut grad[s.bias_offset..s.bias_offset + s.out_dim];
            for row in delta.chunks(s.out_dim) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; rows * s.in_dim];
            matmul_ab(&delta, w, &mut prev, rows, s.out_dim, s.in_dim);
            // ReLU mask: the post-activation is positive iff the pre-activation was.
            for (p, a) in prev.iter_mut().zip(input_act) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        (loss, grad)
    }
}

fn to_label_rows(labels: &[Vec<bool>]) -> Vec<f64> {
    labels
        .iter()
        .flat_map(|row| row.iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect()
}

/// Train a fresh model with mini-batch gradient descent.
pub fn train(config: MlpConfig, inputs: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MlpModel> {
    train_with_log(config, inputs, labels).map(|(m, _)| m)
}

/// [`train`], also returning the per-epoch loss trajectory.
pub fn train_with_log(
    config: MlpConfig,
    inputs: &[Vec<f64>],
    labels: &[Vec<bool>],
) -> Result<(MlpModel, TrainingLog)> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} label rows",
            inputs.len(),
            labels.len()
        )));
    }
    let mut model = MlpModel::init(config)?;
    for (x, y) in inputs.iter().zip(labels) {
        model.check_input(x)?;
        if y.len() != model.config.n_heads {
            return Err(Error::InputDimension {
                expected: model.config.n_heads,
                found: y.len(),
            });
        }
    }
    let label_rows = to_label_rows(labels);
    let in_dim = model.config.input_dim;
    let heads = model.config.n_heads;
    let batch_size = model.config.batch_size;

    let mut optimizer = Optimizer::new(model.config.optimizer, model.config.learning_rate, model.params.len());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = rng_for(model.config.seed, "mlp-batches");
    let mut log = TrainingLog::default();
    let mut batch_x = Vec::with_capacity(batch_size * in_dim);
    let mut batch_y = Vec::with_capacity(batch_size * heads);

    for epoch in 0..model.config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&inputs[i]);
                batch_y.extend_from_slice(&label_rows[i * heads..(i + 1) * heads]);
            }
            let (loss, grad) = model.batch_loss_and_gradient(&batch_x, &batch_y, chunk.len());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            optimizer.step(&mut model.params, &grad);
        }
        let epoch_loss = epoch_loss / inputs.len() as f64;
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        log.epoch_losses.push(epoch_loss);
    }
    Ok((model, log))
}

/// Mean loss of `model` over a dataset.
pub fn dataset_loss(model: &MlpModel, inputs: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(labels) {
        let y: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        total += model.loss(x, &y)?;
    }
    Ok(total / inputs.len().max(1) as f64)
}
