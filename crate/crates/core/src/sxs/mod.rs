//! Rejection-sampling comparison of two reward models.
//!
//! Both models score a pool of candidates; prompts where their top picks
//! differ become side-by-side pairs. Raters judge each pair once per task
//! (overall preference plus one task per attribute) and the judgments are
//! mapped back to the models that picked each image.

mod service;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};
use crate::model::RewardModel;
use crate::rng::rng_for;

pub use service::{AnnotationService, Progress, ResponseSubmission, AssignmentView};

pub const PLAN_SCHEMA: &str = "finegrain.plan/1";
pub const SXS_LOG_SCHEMA: &str = "finegrain.sxs-log/1";
pub const SXS_REPORT_SCHEMA: &str = "finegrain.sxs-report/1";
pub const AGGREGATE_TASK: &str = "aggregate";

/// Overall preference followed by the eight attribute tasks.
pub const DEFAULT_TASKS: [&str; 9] = [
    AGGREGATE_TASK,
    "distorted",
    "bright",
    "captivating",
    "photorealistic",
    "chaotic",
    "visually_compelling",
    "disturbing",
    "funny",
];

pub fn default_tasks() -> Vec<String> {
    DEFAULT_TASKS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub source_tag: String,
    pub items: Vec<Example>,
}

impl CandidatePool {
    pub fn from_dataset(dataset: &Dataset, source_tag: &str) -> Self {
        Self { source_tag: source_tag.into(), items: dataset.examples.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementPair {
    pub pair_id: String,
    pub prompt_id: String,
    /// Preferred by model A.
    pub item_a: String,
    /// Preferred by model B.
    pub item_b: String,
    pub score_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisagreementMode {
    /// Per prompt, each model's top item; gap is the sum of both models'
    /// margins for their own pick.
    #[default]
    DualArgmax,
    /// Per prompt, the items maximising and minimising `s_a - s_b`; gap is the
    /// difference of those two values.
    ItemDelta,
}

impl FromStr for DisagreementMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual-argmax" => Ok(Self::DualArgmax),
            "item-delta" => Ok(Self::ItemDelta),
            other => Err(Error::invalid(format!("unknown disagreement mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub pairs: Vec<DisagreementPair>,
    /// How many pairs short of `k` the pool fell.
    pub shortfall: usize,
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub example_id: String,
    pub prompt_id: String,
    pub score_a: f64,
    pub score_b: f64,
}

/// Index of the maximum of `key`; ties go to the smallest example id so the
/// result does not depend on item order.
fn argmax_by<F: Fn(&ScoredItem) -> f64>(items: &[&ScoredItem], key: F) -> usize {
    let mut best = 0;
    for i in 1..items.len() {
        let (ki, kb) = (key(items[i]), key(items[best]));
        if ki > kb || (ki == kb && items[i].example_id < items[best].example_id) {
            best = i;
        }
    }
    best
}

/// Pair selection on precomputed scores.
pub fn select_from_scores(items: &[ScoredItem], k: usize, mode: DisagreementMode) -> Result<Selection> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if items.iter().any(|i| !i.score_a.is_finite() || !i.score_b.is_finite()) {
        return Err(Error::NonFinite("candidate scores"));
    }
    let mut groups: BTreeMap<&str, Vec<&ScoredItem>> = BTreeMap::new();
    for it in items {
        groups.entry(&it.prompt_id).or_default().push(it);
    }
    let mut pairs = Vec::new();
    for (prompt, group) in groups {
        if group.len() < 2 {
            continue;
        }
        let (a, b, gap) = match mode {
            DisagreementMode::DualArgmax => {
                let a = argmax_by(&group, |i| i.score_a);
                let b = argmax_by(&group, |i| i.score_b);
                let gap = (group[a].score_a - group[b].score_a) + (group[b].score_b - group[a].score_b);
                (a, b, gap)
            }
            DisagreementMode::ItemDelta => {
                let a = argmax_by(&group, |i| i.score_a - i.score_b);
                let b = argmax_by(&group, |i| i.score_b - i.score_a);
                let d = |i: &ScoredItem| i.score_a - i.score_b;
                (a, b, d(group[a]) - d(group[b]))
            }
        };
        if a != b && gap > 0.0 {
            pairs.push(DisagreementPair {
                pair_id: format!("pair:{prompt}"),
                prompt_id: prompt.to_string(),
                item_a: group[a].example_id.clone(),
                item_b: group[b].example_id.clone(),
                score_gap: gap,
            });
        }
    }
    pairs.sort_by(|x, y| y.score_gap.total_cmp(&x.score_gap).then_with(|| x.prompt_id.cmp(&y.prompt_id)));
    let shortfall = k.saturating_sub(pairs.len());
    pairs.truncate(k);
    if shortfall > 0 {
        log::warn!("only {} eligible pairs, {shortfall} short of {k}", pairs.len());
    }
    Ok(Selection { pairs, shortfall })
}

/// Score `pool` with both models and select up to `k` pairs.
pub fn select_disagreement_pairs(
    pool: &CandidatePool,
    model_a: &RewardModel,
    model_b: &RewardModel,
    k: usize,
    mode: DisagreementMode,
) -> Result<Selection> {
    if pool.items.is_empty() {
        return Err(Error::invalid("candidate pool is empty"));
    }
    let inputs: Vec<Vec<f64>> = pool.items.iter().map(|e| e.features()).collect();
    let sa = model_a.score_many(&inputs)?;
    let sb = model_b.score_many(&inputs)?;
    let items: Vec<ScoredItem> = pool
        .items
        .iter()
        .zip(sa.into_iter().zip(sb))
        .map(|(e, (score_a, score_b))| ScoredItem {
            example_id: e.example_id.clone(),
            prompt_id: e.prompt_id.clone(),
            score_a,
            score_b,
        })
        .collect();
    select_from_scores(&items, k, mode)
}

/// Which model's image is shown on the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Left,
    Right,
    Unsure,
}

/// The model a choice votes for, given which model was on the left.
pub fn chosen_model(choice: Choice, left_model: Side) -> Option<Side> {
    match choice {
        Choice::Left => Some(left_model),
        Choice::Right => Some(left_model.other()),
        Choice::Unsure => None,
    }
}

/// The screen side a vote for `model` lands on.
pub fn side_of(model: Side, left_model: Side) -> Choice {
    if model == left_model {
        Choice::Left
    } else {
        Choice::Right
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub pair_id: String,
    pub task: String,
    pub slot: usize,
    pub left_model: Side,
}

/// What raters see for a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMedia {
    pub prompt_text: String,
    pub image_a_ref: String,
    pub image_b_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationPlan {
    pub schema: String,
    pub seed: u64,
    pub tasks: Vec<String>,
    pub raters_per_pair: usize,
    pub pairs: Vec<DisagreementPair>,
    #[serde(default)]
    pub media: BTreeMap<String, PairMedia>,
    /// Presentation order.
    pub assignments: Vec<Assignment>,
}

/// One assignment per (pair, task, rater slot), each with a seeded side coin,
/// in a seeded shuffled order.
pub fn build_annotation_plan(
    pairs: &[DisagreementPair],
    tasks: &[String],
    raters_per_pair: usize,
    seed: u64,
) -> Result<AnnotationPlan> {
    if tasks.is_empty() {
        return Err(Error::invalid("annotation plan needs at least one task"));
    }
    if raters_per_pair == 0 {
        return Err(Error::invalid("raters_per_pair must be at least 1"));
    }
    let unique_tasks: BTreeSet<&String> = tasks.iter().collect();
    let unique_pairs: BTreeSet<&String> = pairs.iter().map(|p| &p.pair_id).collect();
    if unique_tasks.len() != tasks.len() || unique_pairs.len() != pairs.len() {
        return Err(Error::invalid("duplicate task or pair id in annotation plan"));
    }
    let mut sides = rng_for(seed, "plan-sides");
    let mut assignments = Vec::with_capacity(pairs.len() * tasks.len() * raters_per_pair);
    for p in pairs {
        for t in tasks {
            for slot in 0..raters_per_pair {
                assignments.push(Assignment {
                    assignment_id: format!("{}/{}/{}", p.pair_id, t, slot),
                    pair_id: p.pair_id.clone(),
                    task: t.clone(),
                    slot,
                    left_model: if sides.random_bool(0.5) { Side::A } else { Side::B },
                });
            }
        }
    }
    assignments.shuffle(&mut rng_for(seed, "plan-order"));
    Ok(AnnotationPlan {
        schema: PLAN_SCHEMA.into(),
        seed,
        tasks: tasks.to_vec(),
        raters_per_pair,
        pairs: pairs.to_vec(),
        media: BTreeMap::new(),
        assignments,
    })
}

impl AnnotationPlan {
    /// Fill prompt text and image references from pool metadata
    /// (`prompt_text`, `image_ref`), defaulting to the ids.
    pub fn attach_media(&mut self, pool: &CandidatePool) -> Result<()> {
        let by_id: BTreeMap<&str, &Example> = pool.items.iter().map(|e| (e.example_id.as_str(), e)).collect();
        let image_ref = |id: &str| -> Result<String> {
            let e = by_id.get(id).ok_or_else(|| Error::MissingExample(id.to_string()))?;
            Ok(e.metadata.get("image_ref").cloned().unwrap_or_else(|| id.to_string()))
        };
        for p in &self.pairs {
            let a = by_id.get(p.item_a.as_str()).ok_or_else(|| Error::MissingExample(p.item_a.clone()))?;
            let media = PairMedia {
                prompt_text: a.metadata.get("prompt_text").cloned().unwrap_or_else(|| p.prompt_id.clone()),
                image_a_ref: image_ref(&p.item_a)?,
                image_b_ref: image_ref(&p.item_b)?,
            };
            self.media.insert(p.pair_id.clone(), media);
        }
        Ok(())
    }

    pub fn media_for(&self, pair_id: &str) -> PairMedia {
        self.media.get(pair_id).cloned().unwrap_or_else(|| {
            let p = self.pairs.iter().find(|p| p.pair_id == pair_id);
            PairMedia {
                prompt_text: p.map(|p| p.prompt_id.clone()).unwrap_or_default(),
                image_a_ref: p.map(|p| p.item_a.clone()).unwrap_or_default(),
                image_b_ref: p.map(|p| p.item_b.clone()).unwrap_or_default(),
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != PLAN_SCHEMA {
            return Err(Error::invalid(format!("unsupported plan schema `{}`", self.schema)));
        }
        if self.assignments.is_empty() {
            return Err(Error::invalid("annotation plan has no assignments"));
        }
        let pair_ids: BTreeSet<&str> = self.pairs.iter().map(|p| p.pair_id.as_str()).collect();
        let mut seen = BTreeSet::new();
        for a in &self.assignments {
            if !pair_ids.contains(a.pair_id.as_str()) || !self.tasks.contains(&a.task) || a.slot >= self.raters_per_pair {
                return Err(Error::UnknownAssignment(a.assignment_id.clone()));
            }
            if !seen.insert((&a.pair_id, &a.task, a.slot)) {
                return Err(Error::invalid(format!("duplicate assignment `{}`", a.assignment_id)));
            }
        }
        Ok(())
    }

    /// Left-model sides available for `(pair_id, task)`, by slot.
    pub fn slots(&self, pair_id: &str, task: &str) -> Vec<&Assignment> {
        let mut v: Vec<&Assignment> = self
            .assignments
            .iter()
            .filter(|a| a.pair_id == pair_id && a.task == task)
            .collect();
        v.sort_by_key(|a| a.slot);
        v
    }
}

pub fn plan_to_string(plan: &AnnotationPlan) -> Result<String> {
    let mut s = serde_json::to_string_pretty(plan)?;
    s.push('\n');
    Ok(s)
}

pub fn write_plan(plan: &AnnotationPlan, path: &Path) -> Result<()> {
    write_atomic(path, plan_to_string(plan)?.as_bytes())
}

pub fn read_plan(path: &Path) -> Result<AnnotationPlan> {
    let plan: AnnotationPlan = serde_json::from_str(&read_to_string(path)?)?;
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SxSRecord {
    pub pair_id: String,
    pub task: String,
    pub rater_id: String,
    pub choice: Choice,
    pub left_model: Side,
    pub response_ms: u64,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: String,
    pub votes_a: u64,
    pub votes_b: u64,
    pub unsure: u64,
    pub total: u64,
    pub pct_model_a: f64,
    pub pct_model_b: f64,
    pub pct_unsure: f64,
    pub mean_response_seconds: f64,
}

/// Per-task statistics in plan task order. Tasks without records report
/// zero counts and zero percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxSReport {
    pub schema: String,
    pub tasks: Vec<TaskStats>,
}

impl SxSReport {
    pub fn task(&self, name: &str) -> Option<&TaskStats> {
        self.tasks.iter().find(|t| t.task == name)
    }

    /// Fixed-width table, one row per task.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<22}{:>8}{:>8}{:>8}{:>8}{:>10}\n", "task", "A%", "B%", "unsure%", "n", "mean_s");
        for t in &self.tasks {
            out.push_str(&format!(
                "{:<22}{:>8.1}{:>8.1}{:>8.1}{:>8}{:>10.1}\n",
                t.task, t.pct_model_a, t.pct_model_b, t.pct_unsure, t.total, t.mean_response_seconds
            ));
        }
        out
    }
}

/// Check `rec` against the plan and the records accepted so far.
pub(crate) fn check_record(
    plan: &AnnotationPlan,
    rec: &SxSRecord,
    seen: &BTreeMap<(String, String), Vec<(String, Side)>>,
) -> Result<()> {
    let slots = plan.slots(&rec.pair_id, &rec.task);
    if slots.is_empty() {
        return Err(Error::UnknownAssignment(format!("{}/{}", rec.pair_id, rec.task)));
    }
    let key = (rec.pair_id.clone(), rec.task.clone());
    let taken = seen.get(&key).map(Vec::as_slice).unwrap_or(&[]);
    if taken.iter().any(|(r, _)| *r == rec.rater_id) {
        return Err(Error::Duplicate {
            pair_id: rec.pair_id.clone(),
            task: rec.task.clone(),
            rater_id: rec.rater_id.clone(),
        });
    }
    // Some slot with this side must still be free.
    let used = taken.iter().filter(|(_, s)| *s == rec.left_model).count();
    let offered = slots.iter().filter(|a| a.left_model == rec.left_model).count();
    if used >= offered {
        return Err(Error::UnknownAssignment(format!(
            "{}/{} has no free slot with model {:?} on the left",
            rec.pair_id, rec.task, rec.left_model
        )));
    }
    Ok(())
}

/// Aggregate judgments into per-task model preferences and answer times.
pub fn ingest_sxs(records: &[SxSRecord], plan: &AnnotationPlan) -> Result<SxSReport> {
    let mut seen: BTreeMap<(String, String), Vec<(String, Side)>> = BTreeMap::new();
    let mut acc: BTreeMap<&str, (u64, u64, u64, u128)> = BTreeMap::new();
    for rec in records {
        check_record(plan, rec, &seen)?;
        seen.entry((rec.pair_id.clone(), rec.task.clone()))
            .or_default()
            .push((rec.rater_id.clone(), rec.left_model));
        let e = acc.entry(rec.task.as_str()).or_default();
        match chosen_model(rec.choice, rec.left_model) {
            Some(Side::A) => e.0 += 1,
            Some(Side::B) => e.1 += 1,
            None => e.2 += 1,
        }
        e.3 += rec.response_ms as u128;
    }
    let tasks = plan
        .tasks
        .iter()
        .map(|t| {
            let (a, b, u, ms) = acc.get(t.as_str()).copied().unwrap_or_default();
            let n = a + b + u;
            let pct = |c: u64| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
            TaskStats {
                task: t.clone(),
                votes_a: a,
                votes_b: b,
                unsure: u,
                total: n,
                pct_model_a: pct(a),
                pct_model_b: pct(b),
                pct_unsure: pct(u),
                mean_response_seconds: if n == 0 { 0.0 } else { (ms as f64 / n as f64) / 1000.0 },
            }
        })
        .collect();
    Ok(SxSReport { schema: SXS_REPORT_SCHEMA.into(), tasks })
}

pub fn report_to_string(report: &SxSReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogHeader {
    schema: String,
}

pub fn sxs_log_header() -> String {
    format!("{}\n", serde_json::to_string(&LogHeader { schema: SXS_LOG_SCHEMA.into() }).expect("header"))
}

pub fn sxs_log_to_string(records: &[SxSRecord]) -> Result<String> {
    let mut s = sxs_log_header();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_sxs_log(text: &str, origin: &str) -> Result<Vec<SxSRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| Error::Parse { path: origin.into(), line, message };
    let (_, first) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let header: LogHeader = serde_json::from_str(first).map_err(|e| err(1, format!("bad header: {e}")))?;
    if header.schema != SXS_LOG_SCHEMA {
        return Err(err(1, format!("unsupported schema `{}`", header.schema)));
    }
    lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(i + 1, e.to_string())))
        .collect()
}

pub fn read_sxs_log(path: &Path) -> Result<Vec<SxSRecord>> {
    parse_sxs_log(&read_to_string(path)?, &path.display().to_string())
}

pub fn write_sxs_log(records: &[SxSRecord], path: &Path) -> Result<()> {
    write_atomic(path, sxs_log_to_string(records)?.as_bytes())
}
