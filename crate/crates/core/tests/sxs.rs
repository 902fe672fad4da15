//! Pair selection, annotation plans and offline ingestion.

mod common;

use finegrain::sxs::{
    build_annotation_plan, chosen_model, ingest_sxs, parse_sxs_log, plan_to_string, select_from_scores, side_of,
    sxs_log_to_string, AnnotationPlan, Choice, DisagreementMode, ScoredItem, Side,
};
use finegrain::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn item(prompt: usize, img: usize, a: f64, b: f64) -> ScoredItem {
    ScoredItem { example_id: format!("e{prompt:03}_{img}"), prompt_id: format!("p{prompt:03}"), score_a: a, score_b: b }
}

fn arb_items() -> impl Strategy<Value = Vec<ScoredItem>> {
    prop::collection::vec(prop::collection::vec((0u8..6, 0u8..6), 2..5), 1..25).prop_map(|groups| {
        groups
            .into_iter()
            .enumerate()
            .flat_map(|(p, g)| {
                g.into_iter()
                    .enumerate()
                    .map(move |(i, (a, b))| item(p, i, a as f64 / 5.0, b as f64 / 5.0))
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn selection_ignores_item_order(items in arb_items(), k in 1usize..30, seed in any::<u64>(), delta in any::<bool>()) {
        let mode = if delta { DisagreementMode::ItemDelta } else { DisagreementMode::DualArgmax };
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = select_from_scores(&items, k, mode).unwrap();
        let b = select_from_scores(&shuffled, k, mode).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.pairs.len() + a.shortfall, k.max(a.pairs.len()));
        for w in a.pairs.windows(2) {
            prop_assert!(w[0].score_gap > w[1].score_gap
                || (w[0].score_gap == w[1].score_gap && w[0].prompt_id < w[1].prompt_id));
        }
        for p in &a.pairs {
            prop_assert!(p.item_a != p.item_b && p.score_gap > 0.0);
            let prefix = format!("e{}_", &p.prompt_id[1..]);
            prop_assert!(p.item_a.starts_with(&prefix) && p.item_b.starts_with(&prefix));
        }
    }

    #[test]
    fn identical_models_never_disagree(items in arb_items()) {
        let same: Vec<ScoredItem> = items.iter().map(|i| ScoredItem { score_b: i.score_a, ..i.clone() }).collect();
        let sel = select_from_scores(&same, 5, DisagreementMode::DualArgmax).unwrap();
        prop_assert!(sel.pairs.is_empty());
        prop_assert_eq!(sel.shortfall, 5);
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn report_ignores_record_order(seed in any::<u64>(), take in 1usize..400) {
        let plan = common::table_plan();
        let mut records = common::table_records(&plan);
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        records.truncate(take);
        let forward = ingest_sxs(&records, &plan).unwrap();
        records.reverse();
        prop_assert_eq!(&ingest_sxs(&records, &plan).unwrap(), &forward);
        for t in &forward.tasks {
            if t.total > 0 {
                prop_assert!((t.pct_model_a + t.pct_model_b + t.pct_unsure - 100.0).abs() <= 0.1);
            }
        }
    }
}

#[test]
fn side_mapping_round_trips() {
    for model in [Side::A, Side::B] {
        for left in [Side::A, Side::B] {
            assert_eq!(chosen_model(side_of(model, left), left), Some(model));
        }
        assert_eq!(chosen_model(Choice::Unsure, model), None);
    }
}

#[test]
fn gap_formula_on_a_two_item_prompt() {
    let sel = select_from_scores(&[item(0, 0, 0.9, 0.2), item(0, 1, 0.1, 0.8)], 1, DisagreementMode::DualArgmax).unwrap();
    assert_eq!(sel.pairs.len(), 1);
    assert!((sel.pairs[0].score_gap - 1.4).abs() < 1e-12);
    assert_eq!((sel.pairs[0].item_a.as_str(), sel.pairs[0].item_b.as_str()), ("e000_0", "e000_1"));
}

#[test]
fn k_of_194_from_a_larger_pool() {
    let items: Vec<ScoredItem> = (0..300)
        .flat_map(|p| {
            let g = 0.01 * (p % 37) as f64;
            [item(p, 0, 0.6 + g, 0.1), item(p, 1, 0.2, 0.5 + g)]
        })
        .collect();
    let sel = select_from_scores(&items, 194, DisagreementMode::DualArgmax).unwrap();
    assert_eq!((sel.pairs.len(), sel.shortfall), (194, 0));
    let plan = build_annotation_plan(&sel.pairs, &common::tasks(), 3, 0).unwrap();
    assert_eq!(plan.assignments.len(), 5238);
}

#[test]
fn plans_are_seed_deterministic_and_round_trip() {
    let pairs = common::pairs(20);
    let a = build_annotation_plan(&pairs, &common::tasks(), 3, 8).unwrap();
    let b = build_annotation_plan(&pairs, &common::tasks(), 3, 8).unwrap();
    let c = build_annotation_plan(&pairs, &common::tasks(), 3, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.assignments, c.assignments);
    let text = plan_to_string(&a).unwrap();
    let back: AnnotationPlan = serde_json::from_str(&text).unwrap();
    back.validate().unwrap();
    assert_eq!(back, a);
    assert!(build_annotation_plan(&pairs, &[], 3, 8).is_err());
    assert!(build_annotation_plan(&pairs, &common::tasks(), 0, 8).is_err());
}

#[test]
fn ingest_rejects_duplicates_and_unknown_assignments() {
    let plan = common::table_plan();
    let records = common::table_records(&plan);
    let mut dup = records[..3].to_vec();
    dup.push(records[0].clone());
    assert!(matches!(ingest_sxs(&dup, &plan), Err(Error::Duplicate { .. })));

    let mut unknown = records[0].clone();
    unknown.pair_id = "pair:nope".into();
    assert!(matches!(ingest_sxs(&[unknown], &plan), Err(Error::UnknownAssignment(_))));

    let mut wrong_task = records[0].clone();
    wrong_task.task = "sharpness".into();
    assert!(ingest_sxs(&[wrong_task], &plan).is_err());
}

#[test]
fn single_unsure_record() {
    let plan = build_annotation_plan(&common::pairs(1), &["aggregate".to_string()], 1, 0).unwrap();
    let a = &plan.assignments[0];
    let rec = finegrain::sxs::SxSRecord {
        pair_id: a.pair_id.clone(),
        task: a.task.clone(),
        rater_id: "solo".into(),
        choice: Choice::Unsure,
        left_model: a.left_model,
        response_ms: 0,
        timestamp: "t".into(),
    };
    let report = ingest_sxs(&[rec], &plan).unwrap();
    let t = report.task("aggregate").unwrap();
    assert_eq!((t.pct_model_a, t.pct_model_b, t.pct_unsure), (0.0, 0.0, 100.0));
}

#[test]
fn log_text_round_trips() {
    let plan = common::table_plan();
    let records = common::table_records(&plan);
    let text = sxs_log_to_string(&records).unwrap();
    assert!(text.starts_with("{\"schema\":\"finegrain.sxs-log/1\"}\n"));
    assert_eq!(parse_sxs_log(&text, "mem").unwrap(), records);
    assert!(parse_sxs_log("{\"schema\":\"other/9\"}\n", "mem").is_err());
}
