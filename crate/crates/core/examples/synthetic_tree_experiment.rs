//! Controlled experiment: a known decision tree over latent attributes labels
//! synthetic embeddings, and a CBM trained on the tree's attributes is
//! compared with a coarse model and with a CBM on unrelated attributes.
//!
//! ```text
//! cargo run --release --example synthetic_tree_experiment
//! ```

use finegrain::dataset::{generate_synthetic, split_by_prompt, Split, SyntheticSpec};
use finegrain::eval::roc_auc;
use finegrain::model::{coarse_labels_of, train_cbm, train_coarse, MlpConfig};
use finegrain::targets::{attach_tree_labels, DecisionTree, DEFAULT_TREE_ATTRIBUTES};

fn small_mlp(seed: u64) -> MlpConfig {
    MlpConfig {
        hidden_dims: vec![32],
        learning_rate: 1e-2,
        epochs: 40,
        batch_size: 64,
        seed,
        ..MlpConfig::new(1, 1)
    }
}

pub fn run_example() -> finegrain::Result<()> {
    let tree = DecisionTree::default_tree();
    println!("target: {tree}");
    for sigma in [0.0, 1.0] {
        let (dataset, feedback) = generate_synthetic(&SyntheticSpec::balanced(2000, 16, 9, sigma, 7))?;
        let dataset = split_by_prompt(&dataset, (0.5, 0.25, 0.25), 7)?;
        let feedback = attach_tree_labels(&dataset, &tree, &feedback)?;
        let coarse = coarse_labels_of(&feedback);

        let test = dataset.examples_in(Split::Test);
        let xs: Vec<Vec<f64>> = test.iter().map(|e| e.features()).collect();
        let ys: Vec<bool> = test.iter().map(|e| coarse[&e.example_id]).collect();
        let positives = ys.iter().filter(|&&y| y).count();
        println!("noise {sigma}: {} test examples, {positives} good", ys.len());

        let tree_attrs: Vec<String> = DEFAULT_TREE_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
        let disjoint: Vec<String> = ["distorted", "bright", "captivating", "disturbing", "funny", "blurry"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cfg = small_mlp(0);
        let cbm = train_cbm(&dataset, &feedback, &tree_attrs, &cfg)?;
        let off = train_cbm(&dataset, &feedback, &disjoint, &cfg)?;
        let base = train_coarse(&dataset, &coarse, &cfg)?;
        println!("  cbm (tree attributes)      auc {:.4}", roc_auc(&cbm.score_many(&xs)?, &ys)?);
        println!("  cbm (disjoint attributes)  auc {:.4}", roc_auc(&off.score_many(&xs)?, &ys)?);
        println!("  coarse                     auc {:.4}", roc_auc(&base.score_many(&xs)?, &ys)?);
        for (name, w) in cbm.inspect_aggregator()?.weights {
            println!("    weight {name:<20}{w:+.3}");
        }
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
