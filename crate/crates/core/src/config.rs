//! Key–value configuration.
//!
//! Config files are TOML; nested tables flatten to dotted keys, so these two
//! spellings are equivalent:
//!
//! ```toml
//! split.seed = 7
//!
//! [split]
//! seed = 7
//! ```
//!
//! Recognised key families:
//!
//! | key | value |
//! |-----|-------|
//! | `threshold.<attribute>` | real |
//! | `coarse.threshold` | real |
//! | `split.fractions` | `[train, val, test]` |
//! | `split.seed` | integer |
//! | `synthetic.{n, dim, n_attributes, marginals, noise_sigma, seed, attributes, images_per_prompt}` | |
//! | `mlp.{hidden_dims, learning_rate, epochs, batch_size, seed, optimizer}` | |
//! | `cost.coarse`, `cost.attr.<name>`, `cost.include_coarse` | real / bool |
//! | `sweep.{train_sizes, seeds, model_kinds}`, `sweep.attribute_sets.<name>` | lists |
//!
//! Environment variables prefixed with [`ENV_PREFIX`] override file values;
//! `__` separates key segments and the name is lowercased
//! (`FINEGRAIN_SPLIT__SEED=3` sets `split.seed`).
//! Values are read as TOML scalars or arrays, falling back to plain strings.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::dataset::Thresholds;
use crate::error::{Error, Result};
use crate::fsutil::read_to_string;

pub const ENV_PREFIX: &str = "FINEGRAIN_";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl KeyValues {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse { path: origin.into(), line, message: e.message().to_string() }
        })?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    /// Overlay values from `(name, value)` pairs whose name starts with `prefix`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, prefix: &str, vars: I) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(prefix) {
                if rest.is_empty() {
                    continue;
                }
                self.entries.insert(rest.to_lowercase().replace("__", "."), parse_scalar(&value));
            }
        }
    }

    /// Values in `other` win.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    /// Parse `raw` as a TOML value and store it under `key`.
    pub fn set_raw(&mut self, key: &str, raw: &str) {
        self.entries.insert(key.to_string(), parse_scalar(raw));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    fn type_error(key: &str, expected: &str, v: &Value) -> Error {
        Error::invalid(format!("config key `{key}`: expected {expected}, found `{v}`"))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::type_error(key, "a number", v)),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Self::type_error(key, "a nonnegative integer", v)),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Self::type_error(key, "a boolean", v)),
        }
    }

    pub fn get_str(&self, key: &str) -> Result<Option<String>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::type_error(key, "a string", v)),
        }
    }

    fn get_array(&self, key: &str) -> Option<Vec<Value>> {
        match self.entries.get(key)? {
            Value::Array(a) => Some(a.clone()),
            Value::String(s) => Some(s.split(',').map(|p| parse_scalar(p.trim())).collect()),
            other => Some(vec![other.clone()]),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(items) = self.get_array(key) else { return Ok(None) };
        items
            .iter()
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                v => Err(Self::type_error(key, "a list of numbers", v)),
            })
            .collect::<Result<_>>()
            .map(Some)
    }

    pub fn get_u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        let Some(items) = self.get_array(key) else { return Ok(None) };
        items
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                v => Err(Self::type_error(key, "a list of nonnegative integers", v)),
            })
            .collect::<Result<_>>()
            .map(Some)
    }

    pub fn get_str_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        let Some(items) = self.get_array(key) else { return Ok(None) };
        items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                v => Err(Self::type_error(key, "a list of strings", v)),
            })
            .collect::<Result<_>>()
            .map(Some)
    }

    /// `threshold.<attribute>` and `coarse.threshold`, if any are present.
    pub fn thresholds(&self) -> Result<Option<Thresholds>> {
        let mut t = Thresholds::default();
        for key in self.keys_with_prefix("threshold.") {
            let name = key["threshold.".len()..].to_string();
            t.attributes.insert(name, self.get_f64(&key)?.expect("key exists"));
        }
        t.coarse = self.get_f64("coarse.threshold")?;
        if t.attributes.is_empty() && t.coarse.is_none() {
            Ok(None)
        } else {
            Ok(Some(t))
        }
    }

    /// Sorted `key = value` lines; the snapshot recorded in run manifests.
    pub fn dump(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
threshold.bright = 0.5
coarse.threshold = 2.5

[split]
fractions = [0.5, 0.25, 0.25]
seed = 7

[cost]
coarse = 52.7
include_coarse = false
attr.funny = 12.8
"#;

    #[test]
    fn flattens_sections_and_dotted_keys() {
        let kv = KeyValues::parse(SAMPLE, "mem").unwrap();
        assert_eq!(kv.get_u64("split.seed").unwrap(), Some(7));
        assert_eq!(kv.get_f64_list("split.fractions").unwrap(), Some(vec![0.5, 0.25, 0.25]));
        assert_eq!(kv.get_f64("cost.attr.funny").unwrap(), Some(12.8));
        assert_eq!(kv.get_bool("cost.include_coarse").unwrap(), Some(false));
        let t = kv.thresholds().unwrap().unwrap();
        assert_eq!(t.attributes["bright"], 0.5);
        assert_eq!(t.coarse, Some(2.5));
    }

    #[test]
    fn env_overrides_file_values() {
        let mut kv = KeyValues::parse(SAMPLE, "mem").unwrap();
        kv.apply_env(
            ENV_PREFIX,
            vec![
                ("FINEGRAIN_split__seed".to_string(), "11".to_string()),
                ("FINEGRAIN_MLP__OPTIMIZER".to_string(), "sgd".to_string()),
                ("OTHER_split__seed".to_string(), "99".to_string()),
            ],
        );
        assert_eq!(kv.get_u64("split.seed").unwrap(), Some(11));
        assert_eq!(kv.get_str("mlp.optimizer").unwrap().as_deref(), Some("sgd"));
    }

    #[test]
    fn type_errors_name_the_key() {
        let kv = KeyValues::parse("split.seed = \"x\"", "mem").unwrap();
        let err = kv.get_u64("split.seed").unwrap_err().to_string();
        assert!(err.contains("split.seed"), "{err}");
    }

    #[test]
    fn syntax_errors_report_a_line() {
        match KeyValues::parse("a = 1\nb = = 2\n", "cfg.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comma_separated_strings_act_as_lists() {
        let mut kv = KeyValues::default();
        kv.set_raw("sweep.train_sizes", "\"100,250\"");
        assert_eq!(kv.get_u64_list("sweep.train_sizes").unwrap(), Some(vec![100, 250]));
    }
}
