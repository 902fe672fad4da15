//! Turn yes/no logits from a question-answering model into per-category
//! alignment scores, then look at how binarised attributes agree.
//!
//! ```text
//! cargo run --example yes_no_feedback
//! ```

use finegrain::dataset::{binarize, generate_synthetic, SyntheticSpec, ThresholdPolicy};
use finegrain::oracles::{
    alignment_scores, attribute_agreement_matrix, normalize_yes_no, AlignmentQuestion, YesNoScores,
};

pub fn run_example() -> finegrain::Result<()> {
    let answers = [
        ("is there a fox?", 4.1, -2.0),
        ("is the fox red?", 1.2, 0.4),
        ("is the fox jumping?", -0.5, 1.5),
        ("is the fox next to a tree?", 0.0, 0.0),
    ];
    let mut questions = Vec::new();
    for (q, yes, no) in answers {
        let p = normalize_yes_no(YesNoScores { yes_logit: yes, no_logit: no })?;
        println!("{p:.4}  {q}");
        questions.push(AlignmentQuestion {
            question_text: q.into(),
            expected_answer: "yes".into(),
            yes_probability: p,
        });
    }
    for (category, score) in alignment_scores(&questions)? {
        println!("{:<22}{score:.4}", category.as_str());
    }

    // Large logits stay finite.
    let extreme = normalize_yes_no(YesNoScores { yes_logit: 1000.0, no_logit: -1000.0 })?;
    println!("extreme logits: {extreme}");

    let (dataset, _) = generate_synthetic(&SyntheticSpec::balanced(400, 4, 4, 0.0, 3))?;
    let mut scored = dataset.clone();
    for ex in &mut scored.examples {
        for (j, name) in dataset.attribute_names.iter().enumerate() {
            ex.raw_attribute_scores.insert(name.clone(), ex.image_embedding[j % 4]);
        }
    }
    let feedback = binarize(&scored, &ThresholdPolicy::TrainMedian)?;
    let matrix = attribute_agreement_matrix(&feedback, &scored.attribute_names)?;
    println!("agreement between binarised attributes:");
    for (name, row) in scored.attribute_names.iter().zip(&matrix) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
        println!("  {name:<16}{}", cells.join(" "));
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
