//! Learning-curve sweeps: train every (model, attribute set, N, seed) cell on
//! a nested subsample of the train split and score it on the test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use super::cost::{annotation_cost, CostModel};
use crate::dataset::{Dataset, Example, FeedbackMap, Split};
use crate::error::{Error, Result};
use crate::model::{train_cbm_on, train_coarse_on, MlpConfig, ModelKind, RewardModel};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub train_sizes: Vec<usize>,
    /// `(name, attributes)`; only CBM cells use them.
    pub attribute_sets: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
    pub model_kinds: Vec<ModelKind>,
}

impl SweepSpec {
    pub fn validate(&self, available_train: usize) -> Result<()> {
        if self.train_sizes.is_empty() || self.seeds.is_empty() || self.model_kinds.is_empty() {
            return Err(Error::invalid("sweep lists must be nonempty"));
        }
        if self.model_kinds.contains(&ModelKind::Cbm) && self.attribute_sets.is_empty() {
            return Err(Error::invalid("CBM sweeps need at least one attribute set"));
        }
        if let Some(&n) = self.train_sizes.iter().find(|&&n| n == 0 || n > available_train) {
            return Err(Error::invalid(format!(
                "train size {n} outside 1..={available_train}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model_name: String,
    pub n_train: usize,
    pub cost: f64,
    pub auc: f64,
    pub seed: u64,
}

/// A cell that failed to train or evaluate; the rest of the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub model_name: String,
    pub n_train: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutcome {
    pub points: Vec<CurvePoint>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone)]
struct Cell {
    kind: ModelKind,
    model_name: String,
    attributes: Vec<String>,
    n_train: usize,
    seed: u64,
}

/// Model name used in reports: `coarse`, or `cbm:<attribute set>`.
pub fn model_name(kind: ModelKind, attribute_set: &str) -> String {
    match kind {
        ModelKind::Coarse => "coarse".into(),
        ModelKind::Cbm => format!("cbm:{attribute_set}"),
    }
}

/// The first `n` entries of this permutation form the size-`n` subsample, so
/// smaller subsamples are prefixes of larger ones for a fixed seed.
pub fn subsample_order(n_available: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_available).collect();
    order.shuffle(&mut rng_for(seed, "sweep-subsample"));
    order
}

/// Run the sweep single-threaded.
pub fn run_sweep(
    dataset: &Dataset,
    feedback: &FeedbackMap,
    coarse_labels: &BTreeMap<String, bool>,
    spec: &SweepSpec,
    cost_model: &CostModel,
    config: &MlpConfig,
) -> Result<SweepOutcome> {
    run_sweep_with_jobs(dataset, feedback, coarse_labels, spec, cost_model, config, 1)
}

/// Run the sweep on `jobs` worker threads. Output does not depend on `jobs`.
pub fn run_sweep_with_jobs(
    dataset: &Dataset,
    feedback: &FeedbackMap,
    coarse_labels: &BTreeMap<String, bool>,
    spec: &SweepSpec,
    cost_model: &CostModel,
    config: &MlpConfig,
    jobs: usize,
) -> Result<SweepOutcome> {
    let train = dataset.examples_in(Split::Train);
    let test = dataset.examples_in(Split::Test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("sweep needs nonempty train and test splits"));
    }
    spec.validate(train.len())?;
    cost_model.validate()?;

    // CBM stage 2 trains on the same coarse targets as the coarse model.
    let mut merged = feedback.clone();
    for (id, &label) in coarse_labels {
        if let Some(fv) = merged.get_mut(id) {
            fv.coarse_label = Some(label);
        }
    }
    let test_inputs: Vec<Vec<f64>> = test.iter().map(|e| e.features()).collect();
    let test_labels: Vec<bool> = test
        .iter()
        .map(|e| {
            coarse_labels
                .get(&e.example_id)
                .copied()
                .ok_or_else(|| Error::MissingExample(e.example_id.clone()))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &kind in &spec.model_kinds {
        let sets: Vec<(String, Vec<String>)> = match kind {
            ModelKind::Coarse => vec![(String::new(), Vec::new())],
            ModelKind::Cbm => spec.attribute_sets.clone(),
        };
        for (set_name, attributes) in sets {
            for &n_train in &spec.train_sizes {
                for &seed in &spec.seeds {
                    cells.push(Cell {
                        kind,
                        model_name: model_name(kind, &set_name),
                        attributes: attributes.clone(),
                        n_train,
                        seed,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &Cell| -> std::result::Result<CurvePoint, CellFailure> {
        let fail = |e: Error| CellFailure {
            model_name: cell.model_name.clone(),
            n_train: cell.n_train,
            seed: cell.seed,
            error: e.to_string(),
        };
        let order = subsample_order(train.len(), cell.seed);
        let subset: Vec<&Example> = order[..cell.n_train].iter().map(|&i| train[i]).collect();
        let cfg = MlpConfig {
            seed: derive_seed(cell.seed, "sweep-model"),
            ..config.clone()
        };
        let model: RewardModel = match cell.kind {
            ModelKind::Coarse => train_coarse_on(&subset, coarse_labels, &cfg),
            ModelKind::Cbm => train_cbm_on(&subset, &merged, &cell.attributes, &cfg),
        }
        .map_err(fail)?;
        let scores = model.score_many(&test_inputs).map_err(fail)?;
        let auc = roc_auc(&scores, &test_labels).map_err(fail)?;
        let cost = annotation_cost(cost_model, cell.n_train, &cell.attributes, cell.kind).map_err(fail)?;
        Ok(CurvePoint {
            model_name: cell.model_name.clone(),
            n_train: cell.n_train,
            cost,
            auc,
            seed: cell.seed,
        })
    };

    let results: Vec<_> = if jobs <= 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(p) => outcome.points.push(p),
            Err(f) => {
                log::warn!("sweep cell {} n={} seed={} failed: {}", f.model_name, f.n_train, f.seed, f.error);
                outcome.failures.push(f);
            }
        }
    }
    sort_points(&mut outcome.points);
    Ok(outcome)
}

/// Canonical report order: model name, then N, then seed.
pub fn sort_points(points: &mut [CurvePoint]) {
    points.sort_by(|a, b| {
        a.model_name
            .cmp(&b.model_name)
            .then(a.n_train.cmp(&b.n_train))
            .then(a.seed.cmp(&b.seed))
            .then(a.cost.total_cmp(&b.cost))
            .then(a.auc.total_cmp(&b.auc))
    });
}

/// Mean AUC per `(model_name, n_train)` across seeds.
pub fn mean_auc_by_model(points: &[CurvePoint]) -> BTreeMap<(String, usize), f64> {
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for p in points {
        let e = acc.entry((p.model_name.clone(), p.n_train)).or_default();
        e.0 += p.auc;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
