use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::ModelKind;

/// Per-label elicitation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub coarse_cost: f64,
    pub attribute_costs: BTreeMap<String, f64>,
    /// Whether a CBM example also pays for its coarse label (Stage 2 trains on it).
    pub include_coarse_for_cbm: bool,
}

impl CostModel {
    /// Every label costs 1.
    pub fn unit<S: AsRef<str>>(attributes: &[S]) -> Self {
        Self {
            coarse_cost: 1.0,
            attribute_costs: attributes.iter().map(|a| (a.as_ref().to_string(), 1.0)).collect(),
            include_coarse_for_cbm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_cost > 0.0 && self.coarse_cost.is_finite()) {
            return Err(Error::invalid("coarse cost must be positive"));
        }
        if let Some((name, c)) = self
            .attribute_costs
            .iter()
            .find(|(_, c)| !(**c > 0.0 && c.is_finite()))
        {
            return Err(Error::invalid(format!("cost for `{name}` must be positive, got {c}")));
        }
        Ok(())
    }

    /// Read `cost.coarse`, `cost.attr.<name>` and `cost.include_coarse`.
    /// Missing keys keep the defaults (1.0, no attributes, true).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut model = CostModel::unit::<&str>(&[]);
        if let Some(c) = kv.get_f64("cost.coarse")? {
            model.coarse_cost = c;
        }
        if let Some(b) = kv.get_bool("cost.include_coarse")? {
            model.include_coarse_for_cbm = b;
        }
        for key in kv.keys_with_prefix("cost.attr.") {
            let name = key["cost.attr.".len()..].to_string();
            let value = kv.get_f64(&key)?.expect("key exists");
            model.attribute_costs.insert(name, value);
        }
        model.validate()?;
        Ok(model)
    }
}

/// Total annotation cost of `n` examples for a model of `kind` trained on `attributes`.
///
/// Coarse: `n·coarse_cost`. CBM: `n·(Σ c_j + [include_coarse]·coarse_cost)`.
pub fn annotation_cost<S: AsRef<str>>(
    cost_model: &CostModel,
    n: usize,
    attributes: &[S],
    kind: ModelKind,
) -> Result<f64> {
    let n = n as f64;
    match kind {
        ModelKind::Coarse => Ok(n * cost_model.coarse_cost),
        ModelKind::Cbm => {
            let mut seen = BTreeSet::new();
            let mut per_example = 0.0;
            for a in attributes {
                let a = a.as_ref();
                let c = cost_model
                    .attribute_costs
                    .get(a)
                    .ok_or_else(|| Error::UnknownAttribute(a.to_string()))?;
                if seen.insert(a) {
                    per_example += c;
                }
            }
            if cost_model.include_coarse_for_cbm {
                per_example += cost_model.coarse_cost;
            }
            Ok(n * per_example)
        }
    }
}
