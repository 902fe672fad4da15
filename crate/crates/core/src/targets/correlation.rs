use std::collections::BTreeMap;

use crate::dataset::FeedbackMap;
use crate::error::{Error, Result};

/// Phi coefficient (Pearson correlation of two binary variables).
///
/// Returns 0 when `x` is constant; the caller rejects a constant target.
pub fn phi_coefficient(x: &[bool], y: &[bool]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        match (a, b) {
            (true, true) => n11 += 1.0,
            (true, false) => n10 += 1.0,
            (false, true) => n01 += 1.0,
            (false, false) => n00 += 1.0,
        }
    }
    let denom = ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (n11 * n00 - n10 * n01) / denom
    }
}

/// Attributes sorted by descending |phi| with the target (name breaks ties);
/// the reported coefficient keeps its sign.
pub fn rank_attributes_by_target_correlation(
    feedback: &FeedbackMap,
    target: &BTreeMap<String, bool>,
) -> Result<Vec<(String, f64)>> {
    if target.len() < 2 {
        return Err(Error::invalid("at least two examples are required"));
    }
    let positives = target.values().filter(|&&t| t).count();
    if positives == 0 || positives == target.len() {
        return Err(Error::SingleClass("correlation target"));
    }
    let ids: Vec<&String> = target.keys().collect();
    let y: Vec<bool> = target.values().copied().collect();
    let first = feedback
        .get(ids[0])
        .ok_or_else(|| Error::MissingExample(ids[0].clone()))?;
    let names: Vec<String> = first.attribute_labels.keys().cloned().collect();

    let mut ranked = Vec::with_capacity(names.len());
    for name in names {
        let x = ids
            .iter()
            .map(|id| {
                feedback
                    .get(*id)
                    .ok_or_else(|| Error::MissingExample((*id).clone()))?
                    .attribute(&name)
            })
            .collect::<Result<Vec<bool>>>()?;
        ranked.push((name, phi_coefficient(&x, &y)));
    }
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}
