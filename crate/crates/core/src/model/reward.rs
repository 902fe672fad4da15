//! Reward models: the coarse single-stage predictor and the two-stage
//! concept-bottleneck model (attribute MLP followed by a linear aggregator).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::aggregator::{self, LinearAggregator};
use super::mlp::{self, MlpConfig, MlpModel};
use crate::dataset::{Dataset, Example, FeedbackMap, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Coarse,
    Cbm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Coarse => "coarse",
            ModelKind::Cbm => "cbm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(ModelKind::Coarse),
            "cbm" => Ok(ModelKind::Cbm),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    kind: ModelKind,
    stage1: MlpModel,
    stage2: Option<LinearAggregator>,
    attribute_names: Vec<String>,
}

/// Named aggregator weights, for auditing what the reward depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorReport {
    pub weights: Vec<(String, f64)>,
    pub bias: f64,
}

impl RewardModel {
    /// Assemble a model from parts, checking the kind/shape invariants.
    pub fn from_parts(
        kind: ModelKind,
        stage1: MlpModel,
        stage2: Option<LinearAggregator>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        match (kind, &stage2) {
            (ModelKind::Coarse, None) if stage1.n_heads() == 1 => {}
            (ModelKind::Cbm, Some(agg))
                if stage1.n_heads() == attribute_names.len()
                    && agg.weights.len() == attribute_names.len()
                    && !attribute_names.is_empty() => {}
            _ => {
                return Err(Error::invalid(format!(
                    "inconsistent {kind} model: {} heads, {} attributes, aggregator {}",
                    stage1.n_heads(),
                    attribute_names.len(),
                    if stage2.is_some() { "present" } else { "absent" }
                )))
            }
        }
        if let Some(agg) = &stage2 {
            if agg.weights.iter().chain([&agg.bias]).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("aggregator parameters"));
            }
        }
        Ok(Self { kind, stage1, stage2, attribute_names })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn stage1(&self) -> &MlpModel {
        &self.stage1
    }

    pub fn stage2(&self) -> Option<&LinearAggregator> {
        self.stage2.as_ref()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn input_dim(&self) -> usize {
        self.stage1.input_dim()
    }

    /// Stage-1 attribute probabilities (the bottleneck) for one input.
    pub fn attribute_probabilities(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.stage1.forward(input)
    }

    /// Reward in (0, 1).
    pub fn score(&self, input: &[f64]) -> Result<f64> {
        let probs = self.stage1.forward(input)?;
        Ok(self.score_from_stage1(&probs))
    }

    fn score_from_stage1(&self, probs: &[f64]) -> f64 {
        match &self.stage2 {
            None => probs[0],
            Some(agg) => agg.predict(probs),
        }
    }

    /// Scores for many inputs, in input order.
    pub fn score_many(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self
            .stage1
            .forward_many(inputs)?
            .iter()
            .map(|p| self.score_from_stage1(p))
            .collect())
    }

    /// Refit Stage 2 on new targets. Stage-1 parameters are left untouched.
    pub fn retrain_aggregator(&mut self, inputs: &[Vec<f64>], coarse_labels: &[bool]) -> Result<()> {
        if self.kind != ModelKind::Cbm {
            return Err(Error::invalid("only CBM models have an aggregator"));
        }
        let probs = self.stage1.forward_many(inputs)?;
        self.stage2 = Some(aggregator::train(&probs, coarse_labels)?.aggregator);
        Ok(())
    }

    /// Replace the aggregator (e.g. to feed known attributes straight to Stage 2).
    pub fn set_aggregator(&mut self, agg: LinearAggregator) -> Result<()> {
        if self.kind != ModelKind::Cbm || agg.weights.len() != self.attribute_names.len() {
            return Err(Error::invalid("aggregator does not fit this model"));
        }
        self.stage2 = Some(agg);
        Ok(())
    }

    pub fn inspect_aggregator(&self) -> Result<AggregatorReport> {
        let agg = self
            .stage2
            .as_ref()
            .ok_or_else(|| Error::invalid("coarse models have no aggregator to inspect"))?;
        Ok(AggregatorReport {
            weights: self
                .attribute_names
                .iter()
                .cloned()
                .zip(agg.weights.iter().copied())
                .collect(),
            bias: agg.bias,
        })
    }
}

/// Stage-1 configuration resized to the data at hand.
fn shaped(config: &MlpConfig, input_dim: usize, heads: usize) -> MlpConfig {
    MlpConfig { input_dim, n_heads: heads, ..config.clone() }
}

fn train_examples(dataset: &Dataset) -> Result<Vec<&Example>> {
    let train = dataset.examples_in(Split::Train);
    if train.is_empty() {
        return Err(Error::invalid("train split is empty; assign splits first"));
    }
    Ok(train)
}

fn coarse_labels_for(examples: &[&Example], labels: &BTreeMap<String, bool>) -> Result<Vec<bool>> {
    examples
        .iter()
        .map(|e| {
            labels
                .get(&e.example_id)
                .copied()
                .ok_or_else(|| Error::MissingExample(e.example_id.clone()))
        })
        .collect()
}

/// Coarse labels carried inside a feedback map.
pub fn coarse_labels_of(feedback: &FeedbackMap) -> BTreeMap<String, bool> {
    feedback
        .iter()
        .filter_map(|(id, fv)| fv.coarse_label.map(|c| (id.clone(), c)))
        .collect()
}

/// Train a CBM on the train split of `dataset`.
pub fn train_cbm(
    dataset: &Dataset,
    feedback: &FeedbackMap,
    attributes: &[String],
    config: &MlpConfig,
) -> Result<RewardModel> {
    let train = train_examples(dataset)?;
    train_cbm_on(&train, feedback, attributes, config)
}

/// Train a CBM on an explicit list of examples.
///
/// Stage 1 maps features to the selected attribute labels. Stage 2 then fits
/// the aggregator on Stage-1 probabilities over the same examples.
pub fn train_cbm_on(
    examples: &[&Example],
    feedback: &FeedbackMap,
    attributes: &[String],
    config: &MlpConfig,
) -> Result<RewardModel> {
    if attributes.is_empty() {
        return Err(Error::invalid("a CBM needs at least one attribute"));
    }
    if examples.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let inputs: Vec<Vec<f64>> = examples.iter().map(|e| e.features()).collect();
    let mut attr_labels = Vec::with_capacity(examples.len());
    let mut coarse = Vec::with_capacity(examples.len());
    for e in examples {
        let fv = feedback
            .get(&e.example_id)
            .ok_or_else(|| Error::MissingExample(e.example_id.clone()))?;
        attr_labels.push(
            attributes
                .iter()
                .map(|a| fv.attribute(a))
                .collect::<Result<Vec<bool>>>()?,
        );
        coarse.push(fv.coarse_label.ok_or_else(|| {
            Error::invalid(format!("example `{}` has no coarse label", e.example_id))
        })?);
    }
    if coarse.iter().all(|&c| c) || coarse.iter().all(|&c| !c) {
        return Err(Error::SingleClass("coarse labels"));
    }
    let cfg = shaped(config, inputs[0].len(), attributes.len());
    let stage1 = mlp::train(cfg, &inputs, &attr_labels)?;
    let probs = stage1.forward_many(&inputs)?;
    let fit = aggregator::train(&probs, &coarse)?;
    RewardModel::from_parts(ModelKind::Cbm, stage1, Some(fit.aggregator), attributes.to_vec())
}

/// Train the single-head coarse model on the train split of `dataset`.
pub fn train_coarse(
    dataset: &Dataset,
    coarse_labels: &BTreeMap<String, bool>,
    config: &MlpConfig,
) -> Result<RewardModel> {
    let train = train_examples(dataset)?;
    train_coarse_on(&train, coarse_labels, config)
}

pub fn train_coarse_on(
    examples: &[&Example],
    coarse_labels: &BTreeMap<String, bool>,
    config: &MlpConfig,
) -> Result<RewardModel> {
    if examples.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let labels = coarse_labels_for(examples, coarse_labels)?;
    if labels.iter().all(|&c| c) || labels.iter().all(|&c| !c) {
        return Err(Error::SingleClass("coarse labels"));
    }
    let inputs: Vec<Vec<f64>> = examples.iter().map(|e| e.features()).collect();
    let rows: Vec<Vec<bool>> = labels.iter().map(|&l| vec![l]).collect();
    let cfg = shaped(config, inputs[0].len(), 1);
    let stage1 = mlp::train(cfg, &inputs, &rows)?;
    RewardModel::from_parts(ModelKind::Coarse, stage1, None, Vec::new())
}
