use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Per-class feature statistics over a shared discrete feature axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub prior: f64,
    /// `P(x_i | class)`; sums to 1.
    pub conditional: Vec<f64>,
    /// `w_i(class)`: how often feature `i` decides the classification, in [0, 1].
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClassModel {
    n_features: usize,
    classes: IndexMap<String, ClassFeatures>,
}

impl FeatureClassModel {
    pub fn new(classes: IndexMap<String, ClassFeatures>) -> Result<Self> {
        let n_features = classes.values().next().map_or(0, |c| c.conditional.len());
        let model = FeatureClassModel {
            n_features,
            classes,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidModel(m));
        if self.classes.is_empty() {
            return invalid("no classes".into());
        }
        let prior_sum: f64 = self.classes.values().map(|c| c.prior).sum();
        if (prior_sum - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("priors sum to {prior_sum}"));
        }
        for (name, c) in &self.classes {
            if !(c.prior >= 0.0) {
                return invalid(format!("class `{name}` has prior {}", c.prior));
            }
            if c.conditional.len() != self.n_features || c.weights.len() != self.n_features {
                return invalid(format!(
                    "class `{name}` has {} conditionals and {} weights for {} features",
                    c.conditional.len(),
                    c.weights.len(),
                    self.n_features
                ));
            }
            if c.conditional.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return invalid(format!("class `{name}` has a negative conditional"));
            }
            let sum: f64 = c.conditional.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return invalid(format!("conditionals of `{name}` sum to {sum}"));
            }
            if c.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return invalid(format!("class `{name}` has a weight outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn class(&self, name: &str) -> Result<&ClassFeatures> {
        self.classes
            .get(name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn classes(&self) -> &IndexMap<String, ClassFeatures> {
        &self.classes
    }

    /// Weighted densities `P(x_i|C) * P(C) * w_i(C)` for one class.
    pub fn weighted_density(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.class(name)?;
        Ok(c.conditional
            .iter()
            .zip(&c.weights)
            .map(|(p, w)| p * c.prior * w)
            .collect())
    }
}

fn pair<'a>(model: &'a FeatureClassModel, c0: &str, c1: &str) -> Result<(&'a ClassFeatures, &'a ClassFeatures)> {
    let a = model.class(c0)?;
    let b = model.class(c1)?;
    if c0 == c1 {
        return Err(Error::InvalidModel(format!("pairwise error needs two distinct classes, got `{c0}` twice")));
    }
    Ok((a, b))
}

/// Weighted Bayes error between two classes: the sum over features of the
/// smaller weighted density.
pub fn bayes_error(model: &FeatureClassModel, c0: &str, c1: &str) -> Result<f64> {
    let (a, b) = pair(model, c0, c1)?;
    let mut total = 0.0;
    for i in 0..model.n_features {
        let t0 = a.conditional[i] * a.prior * a.weights[i];
        let t1 = b.conditional[i] * b.prior * b.weights[i];
        total += t0.min(t1);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub feature_index: usize,
    pub w_density_c0: f64,
    pub w_density_c1: f64,
    pub min_term: f64,
}

/// The two weighted densities per feature and their minimum; the `min_term`
/// column sums (in order) to [`bayes_error`].
pub fn pdf_curves(model: &FeatureClassModel, c0: &str, c1: &str) -> Result<Vec<CurveRow>> {
    let (a, b) = pair(model, c0, c1)?;
    Ok((0..model.n_features)
        .map(|i| {
            let t0 = a.conditional[i] * a.prior * a.weights[i];
            let t1 = b.conditional[i] * b.prior * b.weights[i];
            CurveRow {
                feature_index: i,
                w_density_c0: t0,
                w_density_c1: t1,
                min_term: t0.min(t1),
            }
        })
        .collect())
}

/// Replaces `members` with their union `general`: priors add, conditionals
/// mix by prior, and each weight is the members' maximum.
pub fn merge_general(model: &FeatureClassModel, members: &[&str], general: &str) -> Result<FeatureClassModel> {
    let mut unique: Vec<&str> = Vec::new();
    for &m in members {
        model.class(m)?;
        if !unique.contains(&m) {
            unique.push(m);
        }
    }
    if unique.len() < 2 {
        return Err(Error::InvalidModel("merging needs at least two distinct classes".into()));
    }
    if model.classes.contains_key(general) && !unique.contains(&general) {
        return Err(Error::InvalidModel(format!("`{general}` already names another class")));
    }

    let prior: f64 = unique.iter().map(|m| model.classes[*m].prior).sum();
    if prior <= 0.0 {
        return Err(Error::ZeroPriorSum);
    }
    let n = model.n_features;
    let mut conditional = vec![0.0; n];
    let mut weights = vec![0.0f64; n];
    for m in &unique {
        let c = &model.classes[*m];
        for i in 0..n {
            conditional[i] += c.conditional[i] * c.prior;
            weights[i] = weights[i].max(c.weights[i]);
        }
    }
    for v in &mut conditional {
        *v /= prior;
    }

    let mut classes = IndexMap::new();
    for (name, c) in &model.classes {
        if unique.contains(&name.as_str()) {
            if !classes.contains_key(general) {
                classes.insert(
                    general.to_string(),
                    ClassFeatures {
                        prior,
                        conditional: conditional.clone(),
                        weights: weights.clone(),
                    },
                );
            }
        } else {
            classes.insert(name.clone(), c.clone());
        }
    }
    FeatureClassModel::new(classes)
}
