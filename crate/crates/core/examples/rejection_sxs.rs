//! Rejection sampling as a proxy for fine-tuning: two reward models pick
//! their favourite image per prompt, the prompts where they disagree most go
//! to side-by-side raters, and the votes are tallied per task.
//!
//! Raters are simulated here; `annotation_service` shows the HTTP flow.
//!
//! ```text
//! cargo run --example rejection_sxs
//! ```

use std::path::Path;

use rand::Rng;

use finegrain::dataset::{binarize, load_dataset, split_by_prompt, ThresholdPolicy};
use finegrain::model::{coarse_labels_of, train_cbm, train_coarse, MlpConfig};
use finegrain::rng::rng_for;
use finegrain::sxs::{
    build_annotation_plan, ingest_sxs, select_disagreement_pairs, side_of, CandidatePool, Choice,
    DisagreementMode, Side, SxSRecord, AGGREGATE_TASK,
};

pub fn run_example() -> finegrain::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small_dataset.jsonl");
    let dataset = split_by_prompt(&load_dataset(&path)?, (0.5, 0.25, 0.25), 1)?;
    let feedback = binarize(&dataset, &ThresholdPolicy::TrainMedian)?;
    let config = MlpConfig {
        hidden_dims: vec![16],
        learning_rate: 1e-2,
        epochs: 100,
        batch_size: 16,
        ..MlpConfig::new(1, 1)
    };
    let cbm = train_cbm(&dataset, &feedback, &dataset.attribute_names, &config)?;
    let coarse = train_coarse(&dataset, &coarse_labels_of(&feedback), &config)?;

    let pool = CandidatePool::from_dataset(&dataset, "fixture");
    let selection = select_disagreement_pairs(&pool, &cbm, &coarse, 10, DisagreementMode::DualArgmax)?;
    println!("{} disagreement pairs (shortfall {})", selection.pairs.len(), selection.shortfall);
    for p in selection.pairs.iter().take(3) {
        println!("  {} cbm={} coarse={} gap={:.3}", p.prompt_id, p.item_a, p.item_b, p.score_gap);
    }

    let tasks = vec![AGGREGATE_TASK.to_string(), "photorealistic".to_string()];
    let mut plan = build_annotation_plan(&selection.pairs, &tasks, 3, 42)?;
    plan.attach_media(&pool)?;
    let left_a = plan.assignments.iter().filter(|a| a.left_model == Side::A).count();
    println!("{} assignments, model A on the left in {left_a}", plan.assignments.len());

    // Raters lean towards model A's pick and sometimes abstain.
    let mut rng = rng_for(42, "simulated-raters");
    let records: Vec<SxSRecord> = plan
        .assignments
        .iter()
        .map(|a| {
            let u: f64 = rng.random();
            let choice = if u < 0.5 {
                side_of(Side::A, a.left_model)
            } else if u < 0.8 {
                side_of(Side::B, a.left_model)
            } else {
                Choice::Unsure
            };
            SxSRecord {
                pair_id: a.pair_id.clone(),
                task: a.task.clone(),
                rater_id: format!("rater{}", a.slot),
                choice,
                left_model: a.left_model,
                response_ms: rng.random_range(8_000..40_000),
                timestamp: "2024-01-01T00:00:00Z".into(),
            }
        })
        .collect();
    let report = ingest_sxs(&records, &plan)?;
    print!("{}", report.to_table());
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
