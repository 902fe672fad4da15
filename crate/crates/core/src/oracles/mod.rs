//! Simulated fine-grained feedback.
//!
//! Attribute scores come from yes/no queries to a vision-language model;
//! alignment scores come from per-question "yes" probabilities grouped into
//! four categories. Model querying happens elsewhere: this module ingests the
//! returned numbers.

mod categorize;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::FeedbackMap;
use crate::error::{Error, Result};
use crate::fsutil::read_to_string;
use crate::model::sigmoid;

pub use categorize::{categorize_question, categorize_with, Lexicon, DEFAULT_LEXICON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YesNoScores {
    pub yes_logit: f64,
    pub no_logit: f64,
}

/// Two-way softmax: `exp(yes) / (exp(yes) + exp(no))`.
pub fn normalize_yes_no(scores: YesNoScores) -> Result<f64> {
    if !scores.yes_logit.is_finite() || !scores.no_logit.is_finite() {
        return Err(Error::NonFinite("yes/no logits"));
    }
    Ok(sigmoid(scores.yes_logit - scores.no_logit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentCategory {
    ObjectNoun,
    AttributeAdjective,
    ActionVerb,
    Relation,
}

impl AlignmentCategory {
    pub const ALL: [AlignmentCategory; 4] = [
        AlignmentCategory::ObjectNoun,
        AlignmentCategory::AttributeAdjective,
        AlignmentCategory::ActionVerb,
        AlignmentCategory::Relation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentCategory::ObjectNoun => "object_noun",
            AlignmentCategory::AttributeAdjective => "attribute_adjective",
            AlignmentCategory::ActionVerb => "action_verb",
            AlignmentCategory::Relation => "relation",
        }
    }

    /// Name used when the category score becomes a dataset attribute.
    pub fn attribute_name(self) -> String {
        format!("align_{}", self.as_str())
    }
}

impl fmt::Display for AlignmentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlignmentCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown alignment category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentQuestion {
    pub question_text: String,
    #[serde(default)]
    pub expected_answer: String,
    pub yes_probability: f64,
}

/// Mean yes-probability per category; categories without questions score 1.0.
pub fn alignment_scores(questions: &[AlignmentQuestion]) -> Result<BTreeMap<AlignmentCategory, f64>> {
    let mut sums: BTreeMap<AlignmentCategory, (f64, usize)> = BTreeMap::new();
    for q in questions {
        if !(0.0..=1.0).contains(&q.yes_probability) {
            return Err(Error::invalid(format!(
                "yes probability {} for `{}` is outside [0, 1]",
                q.yes_probability, q.question_text
            )));
        }
        let e = sums.entry(categorize_question(&q.question_text)).or_default();
        e.0 += q.yes_probability;
        e.1 += 1;
    }
    Ok(AlignmentCategory::ALL
        .into_iter()
        .map(|c| {
            let score = match sums.get(&c) {
                Some(&(s, n)) => s / n as f64,
                None => 1.0,
            };
            (c, score)
        })
        .collect())
}

/// One line of a question-score file. Either `yes_probability` or both
/// logits must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionScoreRecord {
    pub example_id: String,
    pub question_text: String,
    #[serde(default)]
    pub expected_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yes_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yes_logit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_logit: Option<f64>,
}

impl QuestionScoreRecord {
    pub fn to_question(&self) -> Result<AlignmentQuestion> {
        let p = match (self.yes_probability, self.yes_logit, self.no_logit) {
            (Some(p), None, None) => p,
            (None, Some(yes_logit), Some(no_logit)) => normalize_yes_no(YesNoScores { yes_logit, no_logit })?,
            _ => {
                return Err(Error::invalid(
                    "give either yes_probability or both yes_logit and no_logit",
                ))
            }
        };
        Ok(AlignmentQuestion {
            question_text: self.question_text.clone(),
            expected_answer: self.expected_answer.clone(),
            yes_probability: p,
        })
    }
}

/// Questions grouped by example id, from a JSON-lines question-score file.
pub fn parse_question_scores(text: &str, origin: &str) -> Result<BTreeMap<String, Vec<AlignmentQuestion>>> {
    let mut out: BTreeMap<String, Vec<AlignmentQuestion>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: origin.into(), line: i + 1, message };
        let rec: QuestionScoreRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let q = rec.to_question().map_err(|e| err(e.to_string()))?;
        out.entry(rec.example_id).or_default().push(q);
    }
    Ok(out)
}

pub fn read_question_scores(path: &Path) -> Result<BTreeMap<String, Vec<AlignmentQuestion>>> {
    parse_question_scores(&read_to_string(path)?, &path.display().to_string())
}

/// Category scores for every example, keyed by [`AlignmentCategory::attribute_name`];
/// suitable as raw attribute scores.
pub fn alignment_attribute_scores(
    questions: &BTreeMap<String, Vec<AlignmentQuestion>>,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    questions
        .iter()
        .map(|(id, qs)| {
            let scores = alignment_scores(qs)?
                .into_iter()
                .map(|(c, s)| (c.attribute_name(), s))
                .collect();
            Ok((id.clone(), scores))
        })
        .collect()
}

/// `m[i][j]` is the fraction of examples whose labels for attributes `i` and
/// `j` are equal.
pub fn attribute_agreement_matrix(feedback: &FeedbackMap, attributes: &[String]) -> Result<Vec<Vec<f64>>> {
    if feedback.is_empty() {
        return Err(Error::invalid("agreement matrix needs at least one example"));
    }
    let columns: Vec<Vec<bool>> = attributes
        .iter()
        .map(|a| feedback.values().map(|fv| fv.attribute(a)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let n = feedback.len() as f64;
    let m = attributes.len();
    let mut out = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let same = columns[i].iter().zip(&columns[j]).filter(|(a, b)| a == b).count();
            out[i][j] = same as f64 / n;
            out[j][i] = out[i][j];
        }
    }
    Ok(out)
}
