//! Analytic model of why fewer classes per network means fewer
//! classification errors: per-class feature budgets, weighted Bayes error
//! between class pairs, feature-map deformation on shared coordinates, and
//! the accuracy condition for a two-stage cascade to beat a flat network.

mod advantage;
mod budget;
mod deformation;
mod features;

pub use advantage::{modular_advantage, Advantage};
pub use budget::{feature_count, over_capacity, CapacityParams, FeatureBudget};
pub use deformation::{deformation_check, shared_activations, DeformationCheck};
pub use features::{bayes_error, merge_general, pdf_curves, ClassFeatures, CurveRow, FeatureClassModel};

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk form of a feature model. Missing weights default to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub priors: IndexMap<String, f64>,
    pub conditionals: IndexMap<String, Vec<f64>>,
    #[serde(default)]
    pub weights: IndexMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<FeatureBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacityParams>,
}

impl ModelFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Parse {
            context: path.display().to_string(),
            source,
        })
    }

    pub fn model(&self) -> Result<FeatureClassModel> {
        let mut classes = IndexMap::new();
        for (name, &prior) in &self.priors {
            let conditional = self
                .conditionals
                .get(name)
                .ok_or_else(|| Error::InvalidModel(format!("no conditionals for `{name}`")))?
                .clone();
            let weights = match self.weights.get(name) {
                Some(w) => w.clone(),
                None => vec![1.0; conditional.len()],
            };
            classes.insert(
                name.clone(),
                ClassFeatures {
                    prior,
                    conditional,
                    weights,
                },
            );
        }
        if let Some(extra) = self
            .conditionals
            .keys()
            .chain(self.weights.keys())
            .find(|k| !self.priors.contains_key(*k))
        {
            return Err(Error::InvalidModel(format!("`{extra}` has no prior")));
        }
        if let Some(b) = &self.budget {
            b.validate()?;
        }
        if let Some(c) = &self.capacity {
            c.validate()?;
        }
        FeatureClassModel::new(classes)
    }
}
