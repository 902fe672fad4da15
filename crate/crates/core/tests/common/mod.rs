//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use finegrain::sxs::{build_annotation_plan, side_of, AnnotationPlan, Choice, DisagreementPair, Side, SxSRecord};

/// Votes per 1000 for (coarse-model pick, fine-grained-model pick), per task;
/// the remainder is unsure. Model A stands for the coarse model here.
pub const PREFERENCE_TABLE: [(&str, u64, u64); 9] = [
    ("aggregate", 256, 249),
    ("distorted", 369, 318),
    ("bright", 302, 261),
    ("captivating", 184, 191),
    ("photorealistic", 311, 314),
    ("chaotic", 137, 124),
    ("visually_compelling", 206, 158),
    ("disturbing", 82, 86),
    ("funny", 5, 9),
];

/// Published percentages (A, B, unsure) for the rows above.
pub const PREFERENCE_PERCENT: [(f64, f64, f64); 9] = [
    (25.6, 24.9, 49.5),
    (36.9, 31.8, 31.3),
    (30.2, 26.1, 43.6),
    (18.4, 19.1, 62.5),
    (31.1, 31.4, 37.5),
    (13.7, 12.4, 73.9),
    (20.6, 15.8, 63.6),
    (8.2, 8.6, 83.2),
    (0.5, 0.9, 98.6),
];

/// Mean answer time in seconds per task.
pub const ANSWER_SECONDS: [(&str, f64); 9] = [
    ("aggregate", 52.7),
    ("distorted", 56.1),
    ("bright", 18.4),
    ("captivating", 20.2),
    ("photorealistic", 19.4),
    ("chaotic", 24.1),
    ("visually_compelling", 16.2),
    ("disturbing", 19.2),
    ("funny", 12.8),
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn pairs(n: usize) -> Vec<DisagreementPair> {
    (0..n)
        .map(|i| DisagreementPair {
            pair_id: format!("pair:p{i:04}"),
            prompt_id: format!("p{i:04}"),
            item_a: format!("a{i}"),
            item_b: format!("b{i}"),
            score_gap: 1.0 + i as f64,
        })
        .collect()
}

pub fn tasks() -> Vec<String> {
    PREFERENCE_TABLE.iter().map(|r| r.0.to_string()).collect()
}

/// 250 pairs × 4 raters: 1000 assignments per task.
pub fn table_plan() -> AnnotationPlan {
    build_annotation_plan(&pairs(250), &tasks(), 4, 17).unwrap()
}

/// One record per assignment of the plan, voting as in [`PREFERENCE_TABLE`]
/// and answering in times that average to [`ANSWER_SECONDS`] exactly.
pub fn table_records(plan: &AnnotationPlan) -> Vec<SxSRecord> {
    let mut out = Vec::new();
    for ((task, a, b), (_, secs)) in PREFERENCE_TABLE.iter().zip(ANSWER_SECONDS) {
        let base = (secs * 1000.0).round() as u64;
        let slots: Vec<_> = plan.assignments.iter().filter(|x| x.task == *task).collect();
        for (i, asg) in slots.iter().enumerate() {
            let i = i as u64;
            let choice = if i < *a {
                side_of(Side::A, asg.left_model)
            } else if i < a + b {
                side_of(Side::B, asg.left_model)
            } else {
                Choice::Unsure
            };
            // Offsets cancel in pairs, so the mean is exactly `base`.
            let offset = 100 + (i / 2) % 7 * 150;
            let response_ms = if i.is_multiple_of(2) { base - offset } else { base + offset };
            out.push(SxSRecord {
                pair_id: asg.pair_id.clone(),
                task: asg.task.clone(),
                rater_id: format!("rater{}", asg.slot),
                choice,
                left_model: asg.left_model,
                response_ms,
                timestamp: format!("2024-05-01T10:{:02}:{:02}Z", i / 60 % 60, i % 60),
            });
        }
    }
    out
}
