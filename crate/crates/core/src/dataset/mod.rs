//! Examples, fine-grained feedback labels, and the operations that turn raw
//! scores into training data: rater aggregation, binarisation and
//! prompt-level splitting.

mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use io::{
    dataset_to_string, feedback_to_string, load_dataset, parse_dataset, parse_feedback, read_feedback, write_dataset,
    write_feedback, DATASET_SCHEMA, FEEDBACK_SCHEMA,
};
pub use synthetic::{generate_synthetic, SyntheticSpec, IMAGE_QUALITY_ATTRIBUTES};

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// One prompt–image datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub example_id: String,
    pub prompt_id: String,
    pub image_embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub raw_attribute_scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub raw_human_scores: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Example {
    /// Model input: the image embedding, followed by the text embedding when present.
    pub fn features(&self) -> Vec<f64> {
        let mut x = self.image_embedding.clone();
        if let Some(t) = &self.text_embedding {
            x.extend_from_slice(t);
        }
        x
    }
}

/// Binarised fine-grained labels plus the coarse label for one example.
///
/// The coarse label is `None` until a target assigns it (synthetic data,
/// examples without rater scores).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeedbackVector {
    pub attribute_labels: BTreeMap<String, bool>,
    pub coarse_label: Option<bool>,
}

impl FeedbackVector {
    pub fn attribute(&self, name: &str) -> Result<bool> {
        self.attribute_labels
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }
}

/// Feedback keyed by example id. Ordered so iteration is deterministic.
pub type FeedbackMap = BTreeMap<String, FeedbackVector>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Per-attribute thresholds and the coarse threshold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(default)]
    pub attributes: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub attribute_names: Vec<String>,
    pub embedding_dim: usize,
    pub text_embedding_dim: Option<usize>,
    pub rater_count: Option<usize>,
    pub thresholds: Thresholds,
    pub split_assignment: BTreeMap<String, Split>,
}

impl Dataset {
    /// Length of [`Example::features`].
    pub fn feature_dim(&self) -> usize {
        self.embedding_dim + self.text_embedding_dim.unwrap_or(0)
    }

    pub fn example(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.example_id == id)
    }

    pub fn split_of(&self, example: &Example) -> Option<Split> {
        self.split_assignment.get(&example.prompt_id).copied()
    }

    /// Examples assigned to `split`, in file order.
    pub fn examples_in(&self, split: Split) -> Vec<&Example> {
        self.examples
            .iter()
            .filter(|e| self.split_of(e) == Some(split))
            .collect()
    }

    /// Distinct prompt ids in sorted order.
    pub fn prompt_ids(&self) -> Vec<String> {
        self.examples
            .iter()
            .map(|e| e.prompt_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Check every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        let declared: BTreeSet<&str> = self.attribute_names.iter().map(String::as_str).collect();
        if declared.len() != self.attribute_names.len() {
            return Err(Error::invalid("duplicate attribute names"));
        }
        let mut ids = BTreeSet::new();
        for (i, ex) in self.examples.iter().enumerate() {
            let line = i + 2;
            if !ids.insert(ex.example_id.as_str()) {
                return Err(Error::invalid(format!("duplicate example id `{}`", ex.example_id)));
            }
            if ex.image_embedding.len() != self.embedding_dim {
                return Err(Error::DimensionMismatch {
                    line,
                    expected: self.embedding_dim,
                    found: ex.image_embedding.len(),
                });
            }
            match (&ex.text_embedding, self.text_embedding_dim) {
                (Some(t), Some(d)) if t.len() != d => {
                    return Err(Error::DimensionMismatch { line, expected: d, found: t.len() })
                }
                (Some(t), None) => {
                    return Err(Error::DimensionMismatch { line, expected: 0, found: t.len() })
                }
                (None, Some(d)) => {
                    return Err(Error::DimensionMismatch { line, expected: d, found: 0 })
                }
                _ => {}
            }
            if ex.features().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
            for (name, score) in &ex.raw_attribute_scores {
                if !declared.contains(name.as_str()) {
                    return Err(Error::UnknownAttribute(name.clone()));
                }
                if !(0.0..=1.0).contains(score) {
                    return Err(Error::invalid(format!(
                        "example `{}`: attribute score {score} for `{name}` outside [0, 1]",
                        ex.example_id
                    )));
                }
            }
            if let (Some(r), false) = (self.rater_count, ex.raw_human_scores.is_empty()) {
                if ex.raw_human_scores.len() != r {
                    return Err(Error::invalid(format!(
                        "example `{}` has {} rater scores, expected {r}",
                        ex.example_id,
                        ex.raw_human_scores.len()
                    )));
                }
            }
            if ex.raw_human_scores.iter().any(|s| !(1.0..=4.0).contains(s)) {
                return Err(Error::invalid(format!(
                    "example `{}`: human scores must lie in [1, 4]",
                    ex.example_id
                )));
            }
        }
        if self
            .thresholds
            .attributes
            .values()
            .chain(self.thresholds.coarse.iter())
            .any(|t| !t.is_finite())
        {
            return Err(Error::NonFinite("thresholds"));
        }
        Ok(())
    }
}

/// Mean of all rater scores for one example.
pub fn aggregate_human_scores(example: &Example) -> Result<f64> {
    if example.raw_human_scores.is_empty() {
        return Err(Error::invalid(format!(
            "example `{}` has no rater scores",
            example.example_id
        )));
    }
    Ok(example.raw_human_scores.iter().sum::<f64>() / example.raw_human_scores.len() as f64)
}

/// How thresholds are chosen when binarising.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdPolicy {
    /// Caller-supplied thresholds; every declared attribute must be covered.
    Explicit(Thresholds),
    /// Per-attribute median over the train split (all examples when no split
    /// has been assigned). Balances the classes.
    TrainMedian,
}

/// Strict `>`: a score equal to its threshold maps to 0.
#[inline]
pub fn binarize_score(score: f64, threshold: f64) -> bool {
    score > threshold
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Thresholds that `policy` yields for `dataset`.
pub fn resolve_thresholds(dataset: &Dataset, policy: &ThresholdPolicy) -> Result<Thresholds> {
    match policy {
        ThresholdPolicy::Explicit(t) => {
            for name in &dataset.attribute_names {
                if !t.attributes.contains_key(name) {
                    return Err(Error::MissingThreshold(name.clone()));
                }
            }
            let has_raters = dataset.examples.iter().any(|e| !e.raw_human_scores.is_empty());
            if has_raters && t.coarse.is_none() {
                return Err(Error::MissingThreshold("coarse".into()));
            }
            Ok(t.clone())
        }
        ThresholdPolicy::TrainMedian => {
            let pool: Vec<&Example> = if dataset.split_assignment.is_empty() {
                dataset.examples.iter().collect()
            } else {
                dataset.examples_in(Split::Train)
            };
            let mut out = Thresholds::default();
            for name in &dataset.attribute_names {
                let mut scores: Vec<f64> = pool
                    .iter()
                    .filter_map(|e| e.raw_attribute_scores.get(name).copied())
                    .collect();
                let m = median(&mut scores).ok_or_else(|| Error::MissingThreshold(name.clone()))?;
                out.attributes.insert(name.clone(), m);
            }
            let mut coarse: Vec<f64> = pool
                .iter()
                .filter(|e| !e.raw_human_scores.is_empty())
                .map(|e| aggregate_human_scores(e))
                .collect::<Result<_>>()?;
            out.coarse = median(&mut coarse);
            Ok(out)
        }
    }
}

/// Map raw scores to binary feedback for every example.
pub fn binarize(dataset: &Dataset, policy: &ThresholdPolicy) -> Result<FeedbackMap> {
    let thresholds = resolve_thresholds(dataset, policy)?;
    binarize_with(dataset, &thresholds)
}

pub fn binarize_with(dataset: &Dataset, thresholds: &Thresholds) -> Result<FeedbackMap> {
    let mut out = FeedbackMap::new();
    for ex in &dataset.examples {
        let mut labels = BTreeMap::new();
        for name in &dataset.attribute_names {
            let t = *thresholds
                .attributes
                .get(name)
                .ok_or_else(|| Error::MissingThreshold(name.clone()))?;
            let score = *ex.raw_attribute_scores.get(name).ok_or_else(|| {
                Error::invalid(format!(
                    "example `{}` has no score for `{name}`",
                    ex.example_id
                ))
            })?;
            labels.insert(name.clone(), binarize_score(score, t));
        }
        let coarse_label = if ex.raw_human_scores.is_empty() {
            None
        } else {
            let t = thresholds
                .coarse
                .ok_or_else(|| Error::MissingThreshold("coarse".into()))?;
            Some(binarize_score(aggregate_human_scores(ex)?, t))
        };
        out.insert(
            ex.example_id.clone(),
            FeedbackVector { attribute_labels: labels, coarse_label },
        );
    }
    Ok(out)
}

/// Assign every prompt (and therefore all its images) to train/val/test.
pub fn split_by_prompt(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "split fractions must be positive and sum to 1",
        ));
    }
    let mut prompts = dataset.prompt_ids();
    let n = prompts.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 prompts to split, found {n}"
        )));
    }
    prompts.shuffle(&mut rng_for(seed, "split-by-prompt"));

    let mut n_train = ((a * n as f64).round() as usize).max(1);
    let mut n_val = ((b * n as f64).round() as usize).max(1);
    while n_train + n_val > n - 1 {
        if n_train >= n_val {
            n_train -= 1;
        } else {
            n_val -= 1;
        }
    }
    let mut assignment = BTreeMap::new();
    for (i, p) in prompts.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        assignment.insert(p, split);
    }
    let mut out = dataset.clone();
    out.split_assignment = assignment;
    Ok(out)
}
