//! Two-level class taxonomy: general classes, each a union of fine-grained classes.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column label used for unmatched ground truth in confusion matrices.
/// No taxonomy label may use it.
pub const MISS_LABEL: &str = "<miss>";

/// Label level at which detections and ground truth are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fine,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    /// General label -> ordered fine labels. Iteration order is file order.
    pub generals: IndexMap<String, Vec<String>>,
    pub negative_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaxonomyViolation {
    NoGenerals,
    EmptyGeneral(String),
    /// A fine label listed under more than one general class (or twice under one).
    NotAPartition { fine: String, generals: Vec<String> },
    BothLevels(String),
    NegativeLabelUsed(String),
    ReservedLabel(String),
    EmptyLabel,
}

impl fmt::Display for TaxonomyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaxonomyViolation::NoGenerals => write!(f, "no general classes"),
            TaxonomyViolation::EmptyGeneral(g) => write!(f, "empty general class `{g}`"),
            TaxonomyViolation::NotAPartition { fine, generals } => write!(
                f,
                "not a partition: `{fine}` listed under {}",
                generals.join(", ")
            ),
            TaxonomyViolation::BothLevels(l) => {
                write!(f, "`{l}` is both a general and a fine label")
            }
            TaxonomyViolation::NegativeLabelUsed(l) => {
                write!(f, "negative label `{l}` used as a class label")
            }
            TaxonomyViolation::ReservedLabel(l) => write!(f, "`{l}` is a reserved label"),
            TaxonomyViolation::EmptyLabel => write!(f, "empty label"),
        }
    }
}

impl ClassTaxonomy {
    /// Builds a taxonomy and rejects it if any invariant is violated.
    pub fn new(
        generals: impl IntoIterator<Item = (String, Vec<String>)>,
        negative_label: impl Into<String>,
    ) -> Result<Self> {
        let taxonomy = ClassTaxonomy {
            generals: generals.into_iter().collect(),
            negative_label: negative_label.into(),
        };
        taxonomy.ensure_valid()?;
        Ok(taxonomy)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_taxonomy(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTaxonomy(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }

    pub fn general_labels(&self) -> impl Iterator<Item = &str> {
        self.generals.keys().map(String::as_str)
    }

    /// All fine labels, grouped by general class in taxonomy order.
    pub fn fine_labels(&self) -> impl Iterator<Item = &str> {
        self.generals.values().flatten().map(String::as_str)
    }

    pub fn fine_of(&self, general: &str) -> Result<&[String]> {
        self.generals
            .get(general)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLabel(general.to_string()))
    }

    pub fn general_of(&self, fine: &str) -> Result<&str> {
        general_of(self, fine)
    }

    pub fn is_fine(&self, label: &str) -> bool {
        self.fine_labels().any(|l| l == label)
    }

    pub fn is_general(&self, label: &str) -> bool {
        self.generals.contains_key(label)
    }

    /// Label space at the given level, in taxonomy order.
    pub fn labels(&self, level: Level) -> Vec<&str> {
        match level {
            Level::Fine => self.fine_labels().collect(),
            Level::General => self.general_labels().collect(),
        }
    }

    /// Maps a label to the requested level. General labels are accepted
    /// unchanged at the general level.
    pub fn project<'a>(&'a self, label: &'a str, level: Level) -> Result<&'a str> {
        match level {
            Level::Fine if self.is_fine(label) => Ok(label),
            Level::Fine => Err(Error::UnknownLabel(label.to_string())),
            Level::General if self.is_general(label) => Ok(label),
            Level::General => self.general_of(label),
        }
    }
}

/// Returns the general class containing `fine`.
pub fn general_of<'a>(taxonomy: &'a ClassTaxonomy, fine: &str) -> Result<&'a str> {
    taxonomy
        .generals
        .iter()
        .find(|(_, fines)| fines.iter().any(|f| f == fine))
        .map(|(g, _)| g.as_str())
        .ok_or_else(|| Error::UnknownLabel(fine.to_string()))
}

/// Collects every invariant violation; an empty vector means the taxonomy is valid.
pub fn validate_taxonomy(taxonomy: &ClassTaxonomy) -> Vec<TaxonomyViolation> {
    let mut violations = Vec::new();
    if taxonomy.generals.is_empty() {
        violations.push(TaxonomyViolation::NoGenerals);
    }

    let mut owners: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (general, fines) in &taxonomy.generals {
        if fines.is_empty() {
            violations.push(TaxonomyViolation::EmptyGeneral(general.clone()));
        }
        for fine in fines {
            owners.entry(fine).or_default().push(general.clone());
        }
    }

    for (fine, generals) in &owners {
        if generals.len() > 1 {
            violations.push(TaxonomyViolation::NotAPartition {
                fine: fine.to_string(),
                generals: generals.clone(),
            });
        }
        if taxonomy.generals.contains_key(*fine) {
            violations.push(TaxonomyViolation::BothLevels(fine.to_string()));
        }
    }

    let negative = taxonomy.negative_label.as_str();
    let all_labels = || taxonomy.general_labels().chain(owners.keys().copied());
    if all_labels().any(|l| l == negative) {
        violations.push(TaxonomyViolation::NegativeLabelUsed(negative.to_string()));
    }
    for label in all_labels().chain(std::iter::once(negative)) {
        if label == MISS_LABEL {
            violations.push(TaxonomyViolation::ReservedLabel(label.to_string()));
        } else if label.is_empty() {
            violations.push(TaxonomyViolation::EmptyLabel);
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(spec: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
        spec.iter()
            .map(|(g, f)| (g.to_string(), f.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn raw(spec: &[(&str, &[&str])]) -> ClassTaxonomy {
        ClassTaxonomy {
            generals: pairs(spec).into_iter().collect(),
            negative_label: "negative".into(),
        }
    }

    fn five_by_two() -> ClassTaxonomy {
        raw(&[
            ("dog", &["Pekinese", "Spaniel"]),
            ("planet", &["Mars", "Saturn"]),
            ("bike", &["sport bike", "mountain bike"]),
            ("boat", &["kayak", "canoe"]),
            ("bird", &["swan", "duck"]),
        ])
    }

    #[test]
    fn general_of_resolves_fine_labels() {
        let t = five_by_two();
        assert_eq!(general_of(&t, "Pekinese").unwrap(), "dog");
        assert_eq!(general_of(&t, "Saturn").unwrap(), "planet");
    }

    #[test]
    fn general_of_rejects_unknown() {
        let t = raw(&[("dog", &["Pekinese", "Spaniel"])]);
        assert!(matches!(general_of(&t, "canoe"), Err(Error::UnknownLabel(l)) if l == "canoe"));
    }

    #[test]
    fn five_pairs_validate_clean() {
        assert!(validate_taxonomy(&five_by_two()).is_empty());
    }

    #[test]
    fn shared_fine_label_is_not_a_partition() {
        let t = raw(&[("dog", &["Pekinese", "Spaniel"]), ("pet", &["Spaniel"])]);
        let v = validate_taxonomy(&t);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("not a partition"));
    }

    #[test]
    fn empty_general_is_reported() {
        let t = raw(&[("dog", &["Pekinese"]), ("planet", &[])]);
        let v = validate_taxonomy(&t);
        assert_eq!(v, vec![TaxonomyViolation::EmptyGeneral("planet".into())]);
        assert_eq!(v[0].to_string(), "empty general class `planet`");
    }

    #[test]
    fn level_and_negative_collisions() {
        let mut t = raw(&[("dog", &["dog", "negative"])]);
        t.negative_label = "negative".into();
        let v = validate_taxonomy(&t);
        assert!(v.contains(&TaxonomyViolation::BothLevels("dog".into())));
        assert!(v.contains(&TaxonomyViolation::NegativeLabelUsed("negative".into())));
        assert!(validate_taxonomy(&raw(&[])).contains(&TaxonomyViolation::NoGenerals));
    }

    #[test]
    fn projection() {
        let t = five_by_two();
        assert_eq!(t.project("kayak", Level::General).unwrap(), "boat");
        assert_eq!(t.project("boat", Level::General).unwrap(), "boat");
        assert_eq!(t.project("kayak", Level::Fine).unwrap(), "kayak");
        assert!(t.project("boat", Level::Fine).is_err());
    }

    #[test]
    fn general_of_total_and_never_negative() {
        let t = five_by_two();
        for fine in t.fine_labels() {
            let g = t.general_of(fine).unwrap();
            assert_ne!(g, t.negative_label);
            assert!(t.fine_of(g).unwrap().iter().any(|f| f == fine));
        }
    }
}
