use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

pub const ROW_TOLERANCE: f64 = 1e-9;

/// Confidence distribution conditioned on whether the emitted label is correct.
/// `spread` is the standard deviation of a Beta law with the given mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLaw {
    pub mean_correct: f64,
    pub mean_wrong: f64,
    pub spread: f64,
}

impl Default for ConfidenceLaw {
    fn default() -> Self {
        ConfidenceLaw {
            mean_correct: 0.9,
            mean_wrong: 0.6,
            spread: 0.05,
        }
    }
}

impl ConfidenceLaw {
    /// Beta shape parameters for a mean, or `None` when the law is a point mass.
    pub fn beta_shape(&self, mean: f64) -> Option<(f64, f64)> {
        if self.spread == 0.0 || mean <= 0.0 || mean >= 1.0 {
            return None;
        }
        let concentration = mean * (1.0 - mean) / (self.spread * self.spread) - 1.0;
        Some((mean * concentration, (1.0 - mean) * concentration))
    }

    fn validate(&self) -> Result<()> {
        for mean in [self.mean_correct, self.mean_wrong] {
            if !(0.0..=1.0).contains(&mean) {
                return Err(Error::InvalidProfile(format!(
                    "confidence mean {mean} outside [0, 1]"
                )));
            }
            let degenerate = self.spread == 0.0 || mean == 0.0 || mean == 1.0;
            if !degenerate && self.spread * self.spread >= mean * (1.0 - mean) {
                return Err(Error::InvalidProfile(format!(
                    "confidence spread {} too wide for mean {mean}",
                    self.spread
                )));
            }
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "negative or non-finite confidence spread {}",
                self.spread
            )));
        }
        Ok(())
    }
}

/// Spurious detections on negative images: at most one per image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NegativeFalsePositives {
    pub rate: f64,
    /// Distribution over emitted labels; empty means uniform over the label space.
    #[serde(default)]
    pub labels: BTreeMap<String, f64>,
}

/// Generative parameters of a simulated detector.
///
/// `confusion` maps a true label to probabilities over emittable labels. The
/// remaining mass of each row is the probability of missing the object. A row
/// may be keyed by a label the detector cannot emit, which models objects from
/// outside its training scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub label_space: Vec<String>,
    pub confusion: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub negative_fp: NegativeFalsePositives,
    #[serde(default)]
    pub loc_noise_sigma: f64,
    #[serde(default)]
    pub confidence: ConfidenceLaw,
}

impl DetectorProfile {
    /// Noiseless detector: every object detected with its own label.
    pub fn identity(labels: &[&str]) -> Self {
        let label_space: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let confusion = label_space
            .iter()
            .map(|l| (l.clone(), BTreeMap::from([(l.clone(), 1.0)])))
            .collect();
        DetectorProfile {
            label_space,
            confusion,
            negative_fp: NegativeFalsePositives::default(),
            loc_noise_sigma: 0.0,
            confidence: ConfidenceLaw::default(),
        }
    }

    pub fn miss_probability(&self, true_label: &str) -> Option<f64> {
        self.confusion
            .get(true_label)
            .map(|row| (1.0 - row.values().sum::<f64>()).max(0.0))
    }

    pub fn emits(&self, label: &str) -> bool {
        self.label_space.iter().any(|l| l == label)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidProfile(m));
        if self.label_space.is_empty() {
            return invalid("empty label space".into());
        }
        for (true_label, row) in &self.confusion {
            let mut sum = 0.0;
            for (label, &p) in row {
                if !self.emits(label) {
                    return invalid(format!(
                        "row `{true_label}` emits `{label}` outside the label space"
                    ));
                }
                if !(p >= 0.0 && p.is_finite()) {
                    return invalid(format!("row `{true_label}` has probability {p}"));
                }
                sum += p;
            }
            if sum > 1.0 + ROW_TOLERANCE {
                return invalid(format!("row `{true_label}` sums to {sum} > 1"));
            }
        }
        let fp = &self.negative_fp;
        if !(0.0..=1.0).contains(&fp.rate) {
            return invalid(format!("negative fp rate {} outside [0, 1]", fp.rate));
        }
        if !fp.labels.is_empty() {
            let sum: f64 = fp.labels.values().sum();
            if fp.labels.iter().any(|(l, &p)| !self.emits(l) || !(p >= 0.0))
                || (sum - 1.0).abs() > ROW_TOLERANCE
            {
                return invalid("negative fp label distribution is not a distribution".into());
            }
        }
        if !(self.loc_noise_sigma >= 0.0 && self.loc_noise_sigma.is_finite()) {
            return invalid(format!("loc_noise_sigma {}", self.loc_noise_sigma));
        }
        self.confidence.validate()
    }

    /// Checks that the label space is exactly `expected` (as a set).
    pub fn ensure_label_space(&self, expected: &[&str]) -> Result<()> {
        let mut have: Vec<&str> = self.label_space.iter().map(String::as_str).collect();
        let mut want = expected.to_vec();
        have.sort_unstable();
        want.sort_unstable();
        if have == want {
            Ok(())
        } else {
            Err(Error::InvalidProfile(format!(
                "label space {have:?} does not match {want:?}"
            )))
        }
    }
}

/// Collapses a fine-label profile onto general labels.
///
/// Each general row is the uniform average of the rows of its fine classes,
/// with predicted labels summed per general class. Confusion between siblings
/// lands on the diagonal.
pub fn derive_general_profile(
    fine_profile: &DetectorProfile,
    taxonomy: &ClassTaxonomy,
) -> Result<DetectorProfile> {
    for label in &fine_profile.label_space {
        taxonomy.general_of(label)?;
    }

    let mut label_space: Vec<String> = Vec::new();
    for label in &fine_profile.label_space {
        let g = taxonomy.general_of(label)?.to_string();
        if !label_space.contains(&g) {
            label_space.push(g);
        }
    }

    let mut sums: BTreeMap<String, (usize, BTreeMap<String, f64>)> = BTreeMap::new();
    for (true_label, row) in &fine_profile.confusion {
        let true_general = taxonomy.general_of(true_label)?.to_string();
        let (count, acc) = sums.entry(true_general).or_default();
        *count += 1;
        for (pred, &p) in row {
            *acc.entry(taxonomy.general_of(pred)?.to_string())
                .or_insert(0.0) += p;
        }
    }
    let confusion = sums
        .into_iter()
        .map(|(g, (count, acc))| {
            let row = acc.into_iter().map(|(k, v)| (k, v / count as f64)).collect();
            (g, row)
        })
        .collect();

    let mut fp_labels = BTreeMap::new();
    for (label, &p) in &fine_profile.negative_fp.labels {
        *fp_labels
            .entry(taxonomy.general_of(label)?.to_string())
            .or_insert(0.0) += p;
    }

    Ok(DetectorProfile {
        label_space,
        confusion,
        negative_fp: NegativeFalsePositives {
            rate: fine_profile.negative_fp.rate,
            labels: fp_labels,
        },
        loc_noise_sigma: fine_profile.loc_noise_sigma,
        confidence: fine_profile.confidence,
    })
}
