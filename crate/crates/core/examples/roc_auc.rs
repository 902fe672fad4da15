//! ROC-AUC with ties, and the reward-score view of it.
//!
//! ```text
//! cargo run --example roc_auc
//! ```

use finegrain::eval::roc_auc;

pub fn run_example() -> finegrain::Result<()> {
    let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true])?;
    println!("textbook example: {auc:.4}");

    // A tied positive/negative pair counts half.
    let tied = roc_auc(&[0.5, 0.5, 0.9], &[false, true, true])?;
    println!("with a tie: {tied:.4}");

    // A constant scorer carries no ranking information.
    let constant = roc_auc(&[0.3; 6], &[true, false, true, false, false, true])?;
    println!("constant scores: {constant:.4}");

    match roc_auc(&[0.2, 0.7], &[true, true]) {
        Err(e) => println!("single class: {e}"),
        Ok(v) => println!("unexpected {v}"),
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
