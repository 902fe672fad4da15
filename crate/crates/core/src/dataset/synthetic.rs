//! Seeded generator for controlled experiments.
//!
//! Each example draws a latent binary attribute vector `a` (independent
//! Bernoulli per attribute) and observes `embedding = W·a + ε`, with `W` a
//! fixed standard-Gaussian matrix and `ε ~ N(0, σ²·I)`. Attribute labels equal
//! `a` exactly; the coarse label is left for a target to assign.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Example, FeedbackMap, FeedbackVector, Thresholds};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Image-quality attributes, in the order they are introduced for the
/// preference corpus, followed by `blurry`.
pub const IMAGE_QUALITY_ATTRIBUTES: [&str; 9] = [
    "distorted",
    "photorealistic",
    "bright",
    "captivating",
    "chaotic",
    "visually_compelling",
    "disturbing",
    "funny",
    "blurry",
];

fn default_images_per_prompt() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_examples: usize,
    pub embedding_dim: usize,
    pub n_attributes: usize,
    pub attribute_marginals: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Defaults to [`IMAGE_QUALITY_ATTRIBUTES`], then `attr_<j>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_names: Option<Vec<String>>,
    /// Consecutive examples share a prompt id in groups of this size.
    #[serde(default = "default_images_per_prompt")]
    pub images_per_prompt: usize,
}

impl SyntheticSpec {
    /// `n_attributes` attributes, all with marginal 0.5.
    pub fn balanced(n_examples: usize, embedding_dim: usize, n_attributes: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_examples,
            embedding_dim,
            n_attributes,
            attribute_marginals: vec![0.5; n_attributes],
            noise_sigma,
            seed,
            attribute_names: None,
            images_per_prompt: default_images_per_prompt(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        match &self.attribute_names {
            Some(n) => n.clone(),
            None => (0..self.n_attributes)
                .map(|j| {
                    IMAGE_QUALITY_ATTRIBUTES
                        .get(j)
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| format!("attr_{j}"))
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_examples == 0 || self.embedding_dim == 0 || self.n_attributes == 0 {
            return Err(Error::invalid("synthetic sizes must be positive"));
        }
        if self.attribute_marginals.len() != self.n_attributes {
            return Err(Error::invalid("one marginal per attribute is required"));
        }
        if self.attribute_marginals.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::invalid("marginals must lie in (0, 1)"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be a finite nonnegative number"));
        }
        if let Some(n) = &self.attribute_names {
            let unique: std::collections::BTreeSet<_> = n.iter().collect();
            if n.len() != self.n_attributes || unique.len() != n.len() {
                return Err(Error::invalid("attribute_names must be n_attributes distinct names"));
            }
        }
        if self.images_per_prompt == 0 {
            return Err(Error::invalid("images_per_prompt must be positive"));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, FeedbackMap)> {
    spec.validate()?;
    let names = spec.names();
    let (dim, m) = (spec.embedding_dim, spec.n_attributes);

    let mut w_rng = rng_for(spec.seed, "synthetic-projection");
    let projection: Vec<f64> = (0..dim * m).map(|_| StandardNormal.sample(&mut w_rng)).collect();

    let mut latent_rng = rng_for(spec.seed, "synthetic-latents");
    let mut noise_rng = rng_for(spec.seed, "synthetic-noise");
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let width = spec.n_examples.to_string().len();

    let mut examples = Vec::with_capacity(spec.n_examples);
    let mut feedback = FeedbackMap::new();
    for i in 0..spec.n_examples {
        let latent: Vec<bool> = spec
            .attribute_marginals
            .iter()
            .map(|&p| latent_rng.random::<f64>() < p)
            .collect();
        let embedding: Vec<f64> = (0..dim)
            .map(|r| {
                let signal: f64 = (0..m)
                    .filter(|&j| latent[j])
                    .map(|j| projection[r * m + j])
                    .sum();
                if spec.noise_sigma > 0.0 {
                    signal + noise.sample(&mut noise_rng)
                } else {
                    signal
                }
            })
            .collect();
        let id = format!("ex{i:0width$}");
        let labels: BTreeMap<String, bool> = names.iter().cloned().zip(latent.iter().copied()).collect();
        examples.push(Example {
            example_id: id.clone(),
            prompt_id: format!("p{:0width$}", i / spec.images_per_prompt),
            image_embedding: embedding,
            text_embedding: None,
            raw_attribute_scores: labels
                .iter()
                .map(|(k, &v)| (k.clone(), if v { 1.0 } else { 0.0 }))
                .collect(),
            raw_human_scores: Vec::new(),
            metadata: BTreeMap::new(),
        });
        feedback.insert(
            id,
            FeedbackVector { attribute_labels: labels, coarse_label: None },
        );
    }
    let dataset = Dataset {
        examples,
        attribute_names: names.clone(),
        embedding_dim: dim,
        text_embedding_dim: None,
        rater_count: None,
        thresholds: Thresholds {
            attributes: names.into_iter().map(|n| (n, 0.5)).collect(),
            coarse: None,
        },
        split_assignment: BTreeMap::new(),
    };
    Ok((dataset, feedback))
}
