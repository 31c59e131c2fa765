//! Simulated profiles set to chosen per-object error rates.
//!
//! Rates are conditional on detection: `error` is the probability that a
//! detected object carries a wrong label, `miss` the probability that it is
//! not detected at all.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::profile::{ConfidenceLaw, DetectorProfile, NegativeFalsePositives};
use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub baseline_error: f64,
    /// Share of baseline errors that go to sibling fine classes.
    pub baseline_sibling_share: f64,
    pub baseline_miss: f64,
    pub stage1_error: f64,
    pub stage1_miss: f64,
    pub stage2_error: f64,
    pub stage2_miss: f64,
    /// Probability that a stage-2 detector labels an object from another
    /// general class (a misrouted image) as one of its own classes.
    pub stage2_out_of_scope: f64,
    pub negative_fp_rate: f64,
    pub loc_noise_sigma: f64,
    pub stage2_loc_noise_sigma: f64,
    pub confidence: ConfidenceLaw,
    pub stage2_confidence: ConfidenceLaw,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            baseline_error: 0.12,
            baseline_sibling_share: 0.75,
            baseline_miss: 0.02,
            stage1_error: 0.0225,
            stage1_miss: 0.02,
            stage2_error: 0.023,
            stage2_miss: 0.0,
            stage2_out_of_scope: 1.0,
            negative_fp_rate: 0.02,
            loc_noise_sigma: 4.0,
            stage2_loc_noise_sigma: 2.0,
            confidence: ConfidenceLaw::default(),
            stage2_confidence: ConfidenceLaw {
                mean_correct: 0.9,
                mean_wrong: 0.6,
                spread: 0.1,
            },
        }
    }
}

impl Calibration {
    /// Every rate set to zero: detectors that find and label everything exactly.
    pub fn noiseless() -> Self {
        Calibration {
            baseline_error: 0.0,
            baseline_miss: 0.0,
            stage1_error: 0.0,
            stage1_miss: 0.0,
            stage2_error: 0.0,
            stage2_miss: 0.0,
            stage2_out_of_scope: 0.0,
            negative_fp_rate: 0.0,
            loc_noise_sigma: 0.0,
            stage2_loc_noise_sigma: 0.0,
            ..Calibration::default()
        }
    }

    fn check(&self) -> Result<()> {
        let rates = [
            self.baseline_error,
            self.baseline_sibling_share,
            self.baseline_miss,
            self.stage1_error,
            self.stage1_miss,
            self.stage2_error,
            self.stage2_miss,
            self.stage2_out_of_scope,
            self.negative_fp_rate,
        ];
        if rates.iter().all(|r| (0.0..=1.0).contains(r)) {
            Ok(())
        } else {
            Err(Error::InvalidProfile(format!("calibration rate outside [0, 1]: {rates:?}")))
        }
    }
}

/// Row with `correct` on the true label and `error` spread by `wrong`.
fn row(
    true_label: &str,
    miss: f64,
    error: f64,
    wrong: &[(&str, f64)],
) -> BTreeMap<String, f64> {
    let detected = 1.0 - miss;
    let total_weight: f64 = wrong.iter().map(|(_, w)| w).sum();
    let mut row = BTreeMap::new();
    if total_weight > 0.0 {
        row.insert(true_label.to_string(), detected * (1.0 - error));
        for (label, w) in wrong {
            *row.entry(label.to_string()).or_insert(0.0) += detected * error * w / total_weight;
        }
    } else {
        row.insert(true_label.to_string(), detected);
    }
    row
}

fn negatives(rate: f64) -> NegativeFalsePositives {
    NegativeFalsePositives {
        rate,
        labels: BTreeMap::new(),
    }
}

/// Flat multi-class detector over every fine label.
pub fn baseline_profile(taxonomy: &ClassTaxonomy, cal: &Calibration) -> Result<DetectorProfile> {
    cal.check()?;
    let fines: Vec<&str> = taxonomy.fine_labels().collect();
    let mut confusion = BTreeMap::new();
    for &fine in &fines {
        let general = taxonomy.general_of(fine)?;
        let siblings: Vec<&str> = taxonomy
            .fine_of(general)?
            .iter()
            .map(String::as_str)
            .filter(|&f| f != fine)
            .collect();
        let others: Vec<&str> = fines
            .iter()
            .copied()
            .filter(|&f| f != fine && !siblings.contains(&f))
            .collect();
        let sibling_share = match (siblings.is_empty(), others.is_empty()) {
            (true, _) => 0.0,
            (false, true) => 1.0,
            (false, false) => cal.baseline_sibling_share,
        };
        let mut wrong: Vec<(&str, f64)> = Vec::new();
        wrong.extend(siblings.iter().map(|&s| (s, sibling_share / siblings.len() as f64)));
        wrong.extend(others.iter().map(|&o| (o, (1.0 - sibling_share) / others.len() as f64)));
        confusion.insert(fine.to_string(), row(fine, cal.baseline_miss, cal.baseline_error, &wrong));
    }
    let profile = DetectorProfile {
        label_space: fines.iter().map(|s| s.to_string()).collect(),
        confusion,
        negative_fp: negatives(cal.negative_fp_rate),
        loc_noise_sigma: cal.loc_noise_sigma,
        confidence: cal.confidence,
    };
    profile.validate()?;
    Ok(profile)
}

/// Stage-1 detector over general labels; rows are keyed by general label.
pub fn stage1_profile(taxonomy: &ClassTaxonomy, cal: &Calibration) -> Result<DetectorProfile> {
    cal.check()?;
    let generals: Vec<&str> = taxonomy.general_labels().collect();
    let confusion = generals
        .iter()
        .map(|&g| {
            let wrong: Vec<(&str, f64)> =
                generals.iter().filter(|&&o| o != g).map(|&o| (o, 1.0)).collect();
            (g.to_string(), row(g, cal.stage1_miss, cal.stage1_error, &wrong))
        })
        .collect();
    let profile = DetectorProfile {
        label_space: generals.iter().map(|s| s.to_string()).collect(),
        confusion,
        negative_fp: negatives(cal.negative_fp_rate),
        loc_noise_sigma: cal.loc_noise_sigma,
        confidence: cal.confidence,
    };
    profile.validate()?;
    Ok(profile)
}

/// Stage-2 detector for one general class. Objects of other general classes
/// get rows that spread `stage2_out_of_scope` uniformly over the local labels.
pub fn stage2_profile(
    taxonomy: &ClassTaxonomy,
    general: &str,
    cal: &Calibration,
) -> Result<DetectorProfile> {
    cal.check()?;
    let local: Vec<&str> = taxonomy.fine_of(general)?.iter().map(String::as_str).collect();
    let mut confusion = BTreeMap::new();
    for &fine in &local {
        let wrong: Vec<(&str, f64)> = local.iter().filter(|&&o| o != fine).map(|&o| (o, 1.0)).collect();
        confusion.insert(fine.to_string(), row(fine, cal.stage2_miss, cal.stage2_error, &wrong));
    }
    if cal.stage2_out_of_scope > 0.0 {
        for fine in taxonomy.fine_labels().filter(|f| !local.contains(f)) {
            let spread = cal.stage2_out_of_scope / local.len() as f64;
            confusion.insert(
                fine.to_string(),
                local.iter().map(|&l| (l.to_string(), spread)).collect(),
            );
        }
    }
    let profile = DetectorProfile {
        label_space: local.iter().map(|s| s.to_string()).collect(),
        confusion,
        negative_fp: negatives(cal.negative_fp_rate),
        loc_noise_sigma: cal.stage2_loc_noise_sigma,
        confidence: cal.stage2_confidence,
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy() -> ClassTaxonomy {
        let pairs = (0..5).map(|g| (format!("g{g}"), vec![format!("f{g}a"), format!("f{g}b")]));
        ClassTaxonomy::new(pairs, "negative").unwrap()
    }

    #[test]
    fn baseline_rows_carry_requested_error() {
        let cal = Calibration::default();
        let p = baseline_profile(&taxonomy(), &cal).unwrap();
        let r = &p.confusion["f0a"];
        let detected = 1.0 - cal.baseline_miss;
        assert!((r["f0a"] - detected * 0.88).abs() < 1e-12);
        assert!((r["f0b"] - detected * 0.12 * 0.75).abs() < 1e-12);
        assert!((p.miss_probability("f0a").unwrap() - cal.baseline_miss).abs() < 1e-12);
    }

    #[test]
    fn stage_profiles_validate() {
        let t = taxonomy();
        let cal = Calibration::default();
        let s1 = stage1_profile(&t, &cal).unwrap();
        assert_eq!(s1.label_space.len(), 5);
        let s2 = stage2_profile(&t, "g3", &cal).unwrap();
        assert_eq!(s2.label_space, vec!["f3a", "f3b"]);
        assert_eq!(s2.confusion.len(), 10);
        assert!((s2.confusion["f0a"]["f3a"] - 0.5).abs() < 1e-12);
        let quiet = stage2_profile(&t, "g3", &Calibration::noiseless()).unwrap();
        assert_eq!(quiet.confusion.len(), 2);
    }
}
