//! Rule-based categorisation of alignment questions.
//!
//! Rules are tried in order and the first match wins:
//!
//! 1. a relation cue from the lexicon (`left of`, `behind`, `on`, ...).
//!    Single-word cues must be followed by another word, so "is the light on?"
//!    is not a relation.
//! 2. an action: a verb form ending in `-ing` that does not follow a
//!    determiner or adjective and is not a known `-ing` noun, or a lexicon
//!    verb (base or `-s` form) in a `does/do/did/can ...` question.
//! 3. an attribute: a lexicon adjective anywhere, a `what color/size/...` or
//!    `how many` question, or a copular question (`is the ...`) ending in a
//!    word with an adjective suffix.
//! 4. otherwise an object.
//!
//! A trailing "in the picture" (or image/photo/scene) is dropped first; it
//! refers to the image rather than the scene.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::read_to_string;

use super::AlignmentCategory;

/// The lexicon bundled with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

const DETERMINERS: [&str; 16] = [
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no", "his",
    "her", "their", "its",
];
const AUXILIARIES: [&str; 7] = ["does", "do", "did", "can", "could", "will", "would"];
const COPULAS: [&str; 4] = ["is", "are", "was", "were"];
const MEASURE_WORDS: [&str; 7] = ["color", "colour", "size", "shape", "material", "texture", "pattern"];
const IMAGE_NOUNS: [&str; 5] = ["picture", "image", "photo", "photograph", "scene"];
const ADJECTIVE_SUFFIXES: [&str; 8] = ["ful", "ous", "ive", "able", "ible", "less", "ish", "ical"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    /// Relation cues, each as a word sequence.
    pub relations: Vec<Vec<String>>,
    pub adjectives: BTreeSet<String>,
    pub verbs: BTreeSet<String>,
    pub ing_nouns: BTreeSet<String>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_LEXICON, "bundled lexicon").expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let term = line.to_lowercase();
            let parse_err = |message: String| Error::Parse { path: origin.into(), line: i + 1, message };
            match section.as_deref() {
                Some("relations") => lex.relations.push(term.split_whitespace().map(String::from).collect()),
                Some("adjectives") => {
                    lex.adjectives.insert(term);
                }
                Some("verbs") => {
                    lex.verbs.insert(term);
                }
                Some("ing_nouns") => {
                    lex.ing_nouns.insert(term);
                }
                Some(other) => return Err(parse_err(format!("unknown section `[{other}]`"))),
                None => return Err(parse_err("term outside of a section".into())),
            }
        }
        // Longer cues first so "in front of" is reported before "in".
        lex.relations.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Ok(lex)
    }

    fn is_verb_form(&self, word: &str) -> bool {
        if self.verbs.contains(word) {
            return true;
        }
        for suffix in ["es", "s"] {
            if let Some(stem) = word.strip_suffix(suffix) {
                if self.verbs.contains(stem) {
                    return true;
                }
            }
        }
        false
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' || c == '-' { c } else { ' ' })
        .collect();
    let mut words: Vec<String> = cleaned.split_whitespace().map(String::from).collect();
    // "... in the picture" / "... of the image"
    let n = words.len();
    if n >= 3
        && IMAGE_NOUNS.contains(&words[n - 1].as_str())
        && DETERMINERS.contains(&words[n - 2].as_str())
        && matches!(words[n - 3].as_str(), "in" | "of" | "on")
    {
        words.truncate(n - 3);
    }
    words
}

fn has_relation(words: &[String], lex: &Lexicon) -> bool {
    lex.relations.iter().any(|cue| {
        if cue.is_empty() || cue.len() > words.len() {
            return false;
        }
        (0..=words.len() - cue.len()).any(|i| {
            words[i..i + cue.len()] == cue[..] && (cue.len() > 1 || i + 1 < words.len())
        })
    })
}

fn is_progressive(words: &[String], i: usize, lex: &Lexicon) -> bool {
    let w = &words[i];
    if w.len() < 5 || !w.ends_with("ing") || lex.ing_nouns.contains(w.as_str()) {
        return false;
    }
    if i > 0 {
        let prev = words[i - 1].as_str();
        if DETERMINERS.contains(&prev) || lex.adjectives.contains(prev) || prev.ends_with("'s") {
            return false;
        }
    }
    i > 0
}

fn has_action(words: &[String], lex: &Lexicon) -> bool {
    if (0..words.len()).any(|i| is_progressive(words, i, lex)) {
        return true;
    }
    if words.first().is_some_and(|w| AUXILIARIES.contains(&w.as_str())) {
        return words[1..].iter().any(|w| lex.is_verb_form(w));
    }
    false
}

fn has_attribute(words: &[String], lex: &Lexicon) -> bool {
    if words.iter().any(|w| lex.adjectives.contains(w.as_str())) {
        return true;
    }
    match words {
        [first, second, ..] if first == "what" && MEASURE_WORDS.contains(&second.as_str()) => return true,
        [first, second, ..] if first == "how" && second == "many" => return true,
        _ => {}
    }
    let copular = words.first().is_some_and(|w| COPULAS.contains(&w.as_str()))
        && words.get(1).is_some_and(|w| w != "there");
    if copular && words.len() >= 3 {
        let last = words.last().expect("nonempty");
        return ADJECTIVE_SUFFIXES.iter().any(|s| last.len() > s.len() + 2 && last.ends_with(s));
    }
    false
}

/// Categorise `question` with `lexicon`. Total and deterministic.
pub fn categorize_with(question: &str, lexicon: &Lexicon) -> AlignmentCategory {
    let words = tokenize(question);
    if has_relation(&words, lexicon) {
        AlignmentCategory::Relation
    } else if has_action(&words, lexicon) {
        AlignmentCategory::ActionVerb
    } else if has_attribute(&words, lexicon) {
        AlignmentCategory::AttributeAdjective
    } else {
        AlignmentCategory::ObjectNoun
    }
}

/// Categorise with the bundled lexicon.
pub fn categorize_question(question: &str) -> AlignmentCategory {
    thread_local! {
        static LEXICON: Lexicon = Lexicon::bundled();
    }
    LEXICON.with(|lex| categorize_with(question, lex))
}
