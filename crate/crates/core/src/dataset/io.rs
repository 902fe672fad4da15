//! Line-delimited dataset and feedback files.
//!
//! A dataset file starts with one header record followed by one record per
//! example; every record is a single JSON object on its own line:
//!
//! ```text
//! {"schema":"finegrain.dataset/1","embedding_dim":4,"attributes":["bright","funny"],"rater_count":9}
//! {"example_id":"e0","prompt_id":"p0","image_embedding":[0.1,0.2,0.3,0.4],"raw_attribute_scores":{"bright":0.7},"raw_human_scores":[3,2,4,3,3,2,4,4,3],"split":"train"}
//! ```
//!
//! Optional header keys: `text_embedding_dim`, `rater_count`, `thresholds`
//! (`{"attributes":{..},"coarse":2.5}`). Optional record keys:
//! `text_embedding`, `metadata`, `split`. Reals use the shortest decimal
//! form that reads back to the identical 64-bit value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, FeedbackMap, FeedbackVector, Split, Thresholds};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

pub const DATASET_SCHEMA: &str = "finegrain.dataset/1";
pub const FEEDBACK_SCHEMA: &str = "finegrain.feedback/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_embedding_dim: Option<usize>,
    attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rater_count: Option<usize>,
    #[serde(default, skip_serializing_if = "thresholds_empty")]
    thresholds: Thresholds,
}

fn thresholds_empty(t: &Thresholds) -> bool {
    t.attributes.is_empty() && t.coarse.is_none()
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    example: Example,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    parse_dataset(&text, &path.display().to_string())
}

/// Parse dataset text; `origin` names the source in error messages.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, htext) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header record".into()))?;
    let header: Header =
        serde_json::from_str(htext).map_err(|e| parse_err(hline, format!("bad header: {e}")))?;
    if header.schema != DATASET_SCHEMA {
        return Err(parse_err(
            hline,
            format!("unsupported schema `{}`", header.schema),
        ));
    }
    let mut seen = BTreeSet::new();
    let attribute_names: Vec<String> = header
        .attributes
        .into_iter()
        .filter(|a| seen.insert(a.clone()))
        .collect();

    let mut examples = Vec::new();
    let mut split_assignment: BTreeMap<String, Split> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for (line, raw) in lines {
        let rec: Record =
            serde_json::from_str(raw).map_err(|e| parse_err(line, format!("malformed record: {e}")))?;
        let ex = rec.example;
        if ex.image_embedding.len() != header.embedding_dim {
            return Err(Error::DimensionMismatch {
                line,
                expected: header.embedding_dim,
                found: ex.image_embedding.len(),
            });
        }
        match (&ex.text_embedding, header.text_embedding_dim) {
            (Some(t), Some(d)) if t.len() != d => {
                return Err(Error::DimensionMismatch { line, expected: d, found: t.len() })
            }
            (Some(t), None) => {
                return Err(Error::DimensionMismatch { line, expected: 0, found: t.len() })
            }
            (None, Some(d)) => {
                return Err(Error::DimensionMismatch { line, expected: d, found: 0 })
            }
            _ => {}
        }
        for name in ex.raw_attribute_scores.keys() {
            if !seen.contains(name) {
                return Err(parse_err(line, format!("unknown attribute `{name}`")));
            }
        }
        if !ids.insert(ex.example_id.clone()) {
            return Err(parse_err(line, format!("duplicate example id `{}`", ex.example_id)));
        }
        if let Some(split) = rec.split {
            if let Some(prev) = split_assignment.insert(ex.prompt_id.clone(), split) {
                if prev != split {
                    return Err(parse_err(
                        line,
                        format!("prompt `{}` appears in both {prev} and {split}", ex.prompt_id),
                    ));
                }
            }
        }
        examples.push(ex);
    }
    if !split_assignment.is_empty() {
        if let Some(ex) = examples
            .iter()
            .find(|e| !split_assignment.contains_key(&e.prompt_id))
        {
            return Err(parse_err(
                0,
                format!("example `{}` has no split while others do", ex.example_id),
            ));
        }
    }

    let dataset = Dataset {
        examples,
        attribute_names,
        embedding_dim: header.embedding_dim,
        text_embedding_dim: header.text_embedding_dim,
        rater_count: header.rater_count,
        thresholds: header.thresholds,
        split_assignment,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Serialise a dataset to its line format.
pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    let header = Header {
        schema: DATASET_SCHEMA.into(),
        embedding_dim: dataset.embedding_dim,
        text_embedding_dim: dataset.text_embedding_dim,
        attributes: dataset.attribute_names.clone(),
        rater_count: dataset.rater_count,
        thresholds: dataset.thresholds.clone(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for ex in &dataset.examples {
        let rec = Record {
            example: ex.clone(),
            split: dataset.split_assignment.get(&ex.prompt_id).copied(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_string(dataset)?.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackHeader {
    schema: String,
    attributes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRecord {
    example_id: String,
    attributes: BTreeMap<String, u8>,
    #[serde(default)]
    coarse: Option<u8>,
}

fn bit(v: u8, line: usize, origin: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Parse {
            path: origin.into(),
            line,
            message: format!("binary label must be 0 or 1, got {other}"),
        }),
    }
}

/// Feedback file: header `{"schema":..,"attributes":[..]}` then one
/// `{"example_id":..,"attributes":{name:0|1},"coarse":0|1|null}` per line.
pub fn feedback_to_string(attributes: &[String], feedback: &FeedbackMap) -> Result<String> {
    let mut out = serde_json::to_string(&FeedbackHeader {
        schema: FEEDBACK_SCHEMA.into(),
        attributes: attributes.to_vec(),
    })?;
    out.push('\n');
    for (id, fv) in feedback {
        let rec = FeedbackRecord {
            example_id: id.clone(),
            attributes: fv
                .attribute_labels
                .iter()
                .map(|(k, &v)| (k.clone(), v as u8))
                .collect(),
            coarse: fv.coarse_label.map(|b| b as u8),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_feedback(attributes: &[String], feedback: &FeedbackMap, path: &Path) -> Result<()> {
    write_atomic(path, feedback_to_string(attributes, feedback)?.as_bytes())
}

/// Returns the declared attribute list and the feedback map.
pub fn read_feedback(path: &Path) -> Result<(Vec<String>, FeedbackMap)> {
    let origin = path.display().to_string();
    let text = read_to_string(path)?;
    parse_feedback(&text, &origin)
}

pub fn parse_feedback(text: &str, origin: &str) -> Result<(Vec<String>, FeedbackMap)> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.into(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hl, ht) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let header: FeedbackHeader =
        serde_json::from_str(ht).map_err(|e| perr(hl, format!("bad header: {e}")))?;
    if header.schema != FEEDBACK_SCHEMA {
        return Err(perr(hl, format!("unsupported schema `{}`", header.schema)));
    }
    let declared: BTreeSet<&String> = header.attributes.iter().collect();
    let mut map = FeedbackMap::new();
    for (line, raw) in lines {
        let rec: FeedbackRecord =
            serde_json::from_str(raw).map_err(|e| perr(line, format!("malformed record: {e}")))?;
        let keys: BTreeSet<&String> = rec.attributes.keys().collect();
        if keys != declared {
            return Err(perr(line, "attribute set differs from header".into()));
        }
        let mut labels = BTreeMap::new();
        for (k, v) in rec.attributes {
            labels.insert(k, bit(v, line, origin)?);
        }
        let coarse_label = rec.coarse.map(|c| bit(c, line, origin)).transpose()?;
        map.insert(
            rec.example_id,
            FeedbackVector { attribute_labels: labels, coarse_label },
        );
    }
    Ok((header.attributes, map))
}
