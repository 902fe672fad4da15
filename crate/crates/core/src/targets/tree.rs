//! Binary decision trees over attribute labels.
//!
//! Text format (whitespace-insensitive, parentheses optional):
//!
//! ```text
//! tree  := leaf | "if" NAME "then" tree "else" tree | "(" tree ")"
//! leaf  := "good" | "bad"
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeedbackMap, FeedbackVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionTree {
    Leaf(bool),
    Node {
        attribute: String,
        on_true: Box<DecisionTree>,
        on_false: Box<DecisionTree>,
    },
}

/// `good` iff photorealistic, visually compelling and not chaotic.
pub const DEFAULT_TREE: &str = "if photorealistic then (if visually_compelling then (if chaotic then bad else good) else bad) else bad";

/// The three attributes tested by [`DEFAULT_TREE`], in node order.
pub const DEFAULT_TREE_ATTRIBUTES: [&str; 3] = ["photorealistic", "visually_compelling", "chaotic"];

impl DecisionTree {
    pub fn default_tree() -> Self {
        Self::parse(DEFAULT_TREE).expect("default tree parses")
    }

    pub fn constant(good: bool) -> Self {
        DecisionTree::Leaf(good)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser { tokens: tokenize(text)?, pos: 0, end: text.len() };
        let tree = p.tree()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(Error::TreeSyntax {
                position: t.offset,
                message: format!("unexpected trailing token `{}`", t.text),
            });
        }
        Ok(tree)
    }

    /// Attributes referenced anywhere in the tree, sorted.
    pub fn attributes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<String>) {
        if let DecisionTree::Node { attribute, on_true, on_false } = self {
            out.insert(attribute.clone());
            on_true.collect(out);
            on_false.collect(out);
        }
    }

    /// Every referenced attribute must be one of `names`.
    pub fn check_attributes(&self, names: &[String]) -> Result<()> {
        for a in self.attributes() {
            if !names.contains(&a) {
                return Err(Error::UnknownAttribute(a));
            }
        }
        Ok(())
    }

    /// Walk from the root and return the leaf value.
    pub fn evaluate(&self, feedback: &FeedbackVector) -> Result<bool> {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf(v) => return Ok(*v),
                DecisionTree::Node { attribute, on_true, on_false } => {
                    node = if feedback.attribute(attribute)? { on_true } else { on_false };
                }
            }
        }
    }
}

impl fmt::Display for DecisionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionTree::Leaf(true) => f.write_str("good"),
            DecisionTree::Leaf(false) => f.write_str("bad"),
            DecisionTree::Node { attribute, on_true, on_false } => {
                write!(f, "if {attribute} then ")?;
                fmt_branch(f, on_true)?;
                f.write_str(" else ")?;
                fmt_branch(f, on_false)
            }
        }
    }
}

fn fmt_branch(f: &mut fmt::Formatter<'_>, t: &DecisionTree) -> fmt::Result {
    match t {
        DecisionTree::Leaf(_) => write!(f, "{t}"),
        _ => write!(f, "({t})"),
    }
}

/// Evaluate `tree` for every example; the result is the coarse label.
pub fn label_dataset_with_tree(
    dataset: &Dataset,
    tree: &DecisionTree,
    feedback: &FeedbackMap,
) -> Result<std::collections::BTreeMap<String, bool>> {
    dataset
        .examples
        .iter()
        .map(|ex| {
            let fv = feedback
                .get(&ex.example_id)
                .ok_or_else(|| Error::MissingExample(ex.example_id.clone()))?;
            Ok((ex.example_id.clone(), tree.evaluate(fv)?))
        })
        .collect()
}

/// Copy of `feedback` with each coarse label replaced by the tree output.
pub fn attach_tree_labels(
    dataset: &Dataset,
    tree: &DecisionTree,
    feedback: &FeedbackMap,
) -> Result<FeedbackMap> {
    let labels = label_dataset_with_tree(dataset, tree, feedback)?;
    let mut out = feedback.clone();
    for (id, label) in labels {
        if let Some(fv) = out.get_mut(&id) {
            fv.coarse_label = Some(label);
        }
    }
    Ok(out)
}

#[derive(Debug)]
struct Token {
    text: String,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
        } else if c == '(' || c == ')' {
            tokens.push(Token { text: c.to_string(), offset: i });
            chars.next();
        } else if c.is_alphanumeric() || c == '_' || c == '-' {
            let mut word = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_alphanumeric() || c == '_' || c == '-' {
                    word.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(Token { text: word, offset: i });
        } else {
            return Err(Error::TreeSyntax {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn next(&mut self, expected: &str) -> Result<&Token> {
        let end = self.end;
        let t = self.tokens.get(self.pos).ok_or_else(|| Error::TreeSyntax {
            position: end,
            message: format!("unexpected end of input, expected {expected}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next(&format!("`{word}`"))?;
        if t.text != word {
            return Err(Error::TreeSyntax {
                position: t.offset,
                message: format!("expected `{word}`, found `{}`", t.text),
            });
        }
        Ok(())
    }

    fn tree(&mut self) -> Result<DecisionTree> {
        let t = self.next("a tree")?;
        let (text, offset) = (t.text.clone(), t.offset);
        match text.as_str() {
            "good" => Ok(DecisionTree::Leaf(true)),
            "bad" => Ok(DecisionTree::Leaf(false)),
            "(" => {
                let inner = self.tree()?;
                self.expect(")")?;
                Ok(inner)
            }
            "if" => {
                let attr = self.next("an attribute name")?;
                let attribute = attr.text.clone();
                if matches!(attribute.as_str(), "if" | "then" | "else" | "good" | "bad" | "(" | ")") {
                    return Err(Error::TreeSyntax {
                        position: attr.offset,
                        message: format!("expected an attribute name, found `{attribute}`"),
                    });
                }
                self.expect("then")?;
                let on_true = Box::new(self.tree()?);
                self.expect("else")?;
                let on_false = Box::new(self.tree()?);
                Ok(DecisionTree::Node { attribute, on_true, on_false })
            }
            other => Err(Error::TreeSyntax {
                position: offset,
                message: format!("expected `if`, `good`, `bad` or `(`, found `{other}`"),
            }),
        }
    }
}
