//! From raw scores to a saved reward model: median binarisation, a
//! prompt-level split, two-stage training, aggregator inspection and a
//! bit-exact reload.
//!
//! ```text
//! cargo run --example train_cbm
//! ```

use std::path::Path;

use finegrain::dataset::{binarize, load_dataset, resolve_thresholds, split_by_prompt, Split, ThresholdPolicy};
use finegrain::eval::roc_auc;
use finegrain::model::{coarse_labels_of, load_model, save_model, train_cbm, MlpConfig};

pub fn run_example() -> finegrain::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small_dataset.jsonl");
    let dataset = split_by_prompt(&load_dataset(&path)?, (0.5, 0.25, 0.25), 1)?;
    println!(
        "{} examples over {} prompts, {} in train",
        dataset.examples.len(),
        dataset.prompt_ids().len(),
        dataset.examples_in(Split::Train).len()
    );

    let thresholds = resolve_thresholds(&dataset, &ThresholdPolicy::TrainMedian)?;
    println!("train medians: {:?}, coarse {:?}", thresholds.attributes, thresholds.coarse);
    let feedback = binarize(&dataset, &ThresholdPolicy::TrainMedian)?;
    let coarse = coarse_labels_of(&feedback);

    let config = MlpConfig {
        hidden_dims: vec![16],
        learning_rate: 1e-2,
        epochs: 150,
        batch_size: 16,
        seed: 3,
        ..MlpConfig::new(1, 1)
    };
    let model = train_cbm(&dataset, &feedback, &dataset.attribute_names, &config)?;
    let report = model.inspect_aggregator()?;
    for (name, w) in &report.weights {
        println!("weight {name:<22}{w:+.4}");
    }
    println!("bias {:+.4}", report.bias);

    let test = dataset.examples_in(Split::Test);
    let xs: Vec<Vec<f64>> = test.iter().map(|e| e.features()).collect();
    let ys: Vec<bool> = test.iter().map(|e| coarse[&e.example_id]).collect();
    let scores = model.score_many(&xs)?;
    println!("held-out auc {:.4}", roc_auc(&scores, &ys)?);

    let dir = tempfile::tempdir().map_err(|e| finegrain::Error::io("tempdir", e))?;
    let file = dir.path().join("cbm.json");
    save_model(&model, &file)?;
    let reloaded = load_model(&file)?;
    let same = reloaded
        .score_many(&xs)?
        .iter()
        .zip(&scores)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("reloaded scores bit-identical: {same}");
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
