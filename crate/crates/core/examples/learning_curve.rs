//! Learning-curve sweep: AUC and annotation cost against training-set size
//! for a coarse model and two CBMs, averaged over seeds.
//!
//! ```text
//! cargo run --release --example learning_curve
//! ```

use finegrain::dataset::{generate_synthetic, split_by_prompt, SyntheticSpec};
use finegrain::eval::{mean_auc_by_model, report_to_string, run_sweep_with_jobs, CostModel, ReportFormat, SweepSpec};
use finegrain::model::{coarse_labels_of, MlpConfig, ModelKind};
use finegrain::targets::{attach_tree_labels, DecisionTree, DEFAULT_TREE_ATTRIBUTES};

pub fn run_example() -> finegrain::Result<()> {
    let (dataset, feedback) = generate_synthetic(&SyntheticSpec::balanced(1200, 16, 9, 1.0, 11))?;
    let dataset = split_by_prompt(&dataset, (0.5, 0.25, 0.25), 11)?;
    let feedback = attach_tree_labels(&dataset, &DecisionTree::default_tree(), &feedback)?;
    let coarse = coarse_labels_of(&feedback);

    let spec = SweepSpec {
        train_sizes: vec![50, 100, 200],
        attribute_sets: vec![
            ("tree".into(), DEFAULT_TREE_ATTRIBUTES.iter().map(|s| s.to_string()).collect()),
            ("disjoint".into(), ["distorted", "bright", "funny"].iter().map(|s| s.to_string()).collect()),
        ],
        seeds: vec![0, 1, 2],
        model_kinds: vec![ModelKind::Coarse, ModelKind::Cbm],
    };
    let config = MlpConfig {
        hidden_dims: vec![32],
        learning_rate: 1e-2,
        epochs: 30,
        batch_size: 32,
        ..MlpConfig::new(1, 1)
    };
    let costs = CostModel::unit(&dataset.attribute_names);
    let outcome = run_sweep_with_jobs(&dataset, &feedback, &coarse, &spec, &costs, &config, 4)?;
    for f in &outcome.failures {
        println!("failed cell {} n={} seed={}: {}", f.model_name, f.n_train, f.seed, f.error);
    }
    print!("{}", report_to_string(&outcome.points, ReportFormat::Csv)?);

    println!("mean auc over seeds:");
    for ((model, n), auc) in mean_auc_by_model(&outcome.points) {
        println!("  {model:<14} n={n:<5} {auc:.4}");
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
