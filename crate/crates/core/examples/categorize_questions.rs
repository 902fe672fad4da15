//! Sort alignment questions into object / attribute / action / relation.
//!
//! ```text
//! cargo run --example categorize_questions
//! ```

use std::collections::BTreeMap;

use finegrain::oracles::{categorize_question, categorize_with, AlignmentCategory, Lexicon};

const QUESTIONS: [&str; 8] = [
    "is there a dog?",
    "is the dog green?",
    "is the dog to the left of the river?",
    "is the dog running?",
    "is there a building in the picture?",
    "how many birds are there?",
    "does the woman hold an umbrella?",
    "is the cup under the table?",
];

pub fn run_example() -> finegrain::Result<()> {
    let mut counts: BTreeMap<AlignmentCategory, usize> = BTreeMap::new();
    for q in QUESTIONS {
        let c = categorize_question(q);
        *counts.entry(c).or_default() += 1;
        println!("{:<22} {q}", c.as_str());
    }
    println!("{counts:?}");

    // Lexicons are plain text, so a domain can bring its own cue words.
    let lex = Lexicon::parse(
        "[relations]\nfar from\n[adjectives]\nneon\n[verbs]\nglow\n",
        "inline lexicon",
    )?;
    for q in ["is the sign neon?", "is the boat far from shore?", "does the sign glow?"] {
        println!("custom lexicon: {:<22} {q}", categorize_with(q, &lex).as_str());
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
