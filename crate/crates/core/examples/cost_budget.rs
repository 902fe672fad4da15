//! Annotation cost of coarse versus fine-grained labels, with unit costs and
//! with measured seconds-per-label.
//!
//! ```text
//! cargo run --example cost_budget
//! ```

use finegrain::config::KeyValues;
use finegrain::eval::{annotation_cost, CostModel};
use finegrain::model::ModelKind;

const TIMED_COSTS: &str = include_str!("../data/table2_costs.toml");

pub fn run_example() -> finegrain::Result<()> {
    let twelve: Vec<String> = (0..12).map(|j| format!("attr_{j}")).collect();
    let mut unit = CostModel::unit(&twelve);
    println!("unit costs, N=100");
    println!("  coarse            {}", annotation_cost(&unit, 100, &twelve, ModelKind::Coarse)?);
    println!("  cbm + coarse      {}", annotation_cost(&unit, 100, &twelve, ModelKind::Cbm)?);
    unit.include_coarse_for_cbm = false;
    println!("  cbm only          {}", annotation_cost(&unit, 100, &twelve, ModelKind::Cbm)?);

    let timed = CostModel::from_key_values(&KeyValues::parse(TIMED_COSTS, "table2_costs.toml")?)?;
    let all: Vec<String> = timed.attribute_costs.keys().cloned().collect();
    let tree = ["photorealistic", "visually_compelling", "chaotic"];
    println!("seconds per label, N=500");
    println!("  coarse            {:.1}", annotation_cost(&timed, 500, &all, ModelKind::Coarse)?);
    println!("  cbm, tree attrs   {:.1}", annotation_cost(&timed, 500, &tree, ModelKind::Cbm)?);
    println!("  cbm, all attrs    {:.1}", annotation_cost(&timed, 500, &all, ModelKind::Cbm)?);

    // How many examples a fixed budget buys under each labeling scheme.
    let budget = 3600.0 * 8.0;
    for (name, attrs, kind) in [
        ("coarse", &all[..0], ModelKind::Coarse),
        ("cbm, tree", &tree.map(String::from)[..], ModelKind::Cbm),
    ] {
        let per_example = annotation_cost(&timed, 1, attrs, kind)?;
        println!("  8h buys {:>5} examples ({name})", (budget / per_example).floor());
    }
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
