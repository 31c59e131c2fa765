use serde::{Deserialize, Serialize};

use super::matching::MatchResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Ground-truth count of `class` and its detections ranked by confidence,
/// each flagged true positive or not.
fn ranked(class: &str, matches: &MatchResult) -> Result<(usize, Vec<(f64, bool)>)> {
    let positives = matches
        .images
        .iter()
        .flat_map(|img| &img.ground_truth)
        .filter(|l| *l == class)
        .count();
    if positives == 0 {
        return Err(Error::NoGroundTruth(class.to_string()));
    }

    // (confidence, image, detection, tp); image then detection order breaks ties
    let mut ranked: Vec<(f64, usize, usize, bool)> = matches
        .images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| {
            img.matches
                .iter()
                .enumerate()
                .filter(|(_, m)| m.detection.label == class)
                .map(move |(d, m)| (m.detection.confidence, i, d, m.correct_label))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok((positives, ranked.into_iter().map(|(c, _, _, tp)| (c, tp)).collect()))
}

/// Precision/recall after each detection of `class`, ranked by confidence.
/// A detection is a true positive only if it matched ground truth of `class`.
pub fn pr_curve(class: &str, matches: &MatchResult) -> Result<Vec<PrPoint>> {
    let (positives, ranked) = ranked(class, matches)?;
    let mut tp = 0usize;
    Ok(ranked
        .iter()
        .enumerate()
        .map(|(k, &(confidence, is_tp))| {
            tp += usize::from(is_tp);
            PrPoint {
                confidence,
                recall: tp as f64 / positives as f64,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect())
}

/// Unevaluated sum `hi + lo`, about twice the precision of an `f64`.
#[derive(Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    /// `num / den` for integers small enough to be exact in an `f64`.
    fn quotient(num: f64, den: f64) -> Self {
        let hi = num / den;
        let lo = (-hi).mul_add(den, num) / den;
        DoubleDouble { hi, lo }
    }

    fn add(self, other: Self) -> Self {
        let s = self.hi + other.hi;
        let v = s - self.hi;
        let e = (self.hi - (s - v)) + (other.hi - v) + self.lo + other.lo;
        let hi = s + e;
        DoubleDouble { hi, lo: e - (hi - s) }
    }

    fn div(self, den: f64) -> f64 {
        let q = self.hi / den;
        let r = (-q).mul_add(den, self.hi) + self.lo;
        q + r / den
    }
}

/// All-points interpolated AP: area under the precision envelope, where the
/// envelope at each recall is the best precision at that recall or beyond.
///
/// Recall rises by `1 / positives` at each true positive, so the area is the
/// mean envelope precision over true positives. Precisions are compared as
/// exact ratios and summed in double-double arithmetic, so fixtures with
/// rational answers come out correctly rounded.
pub fn average_precision(class: &str, matches: &MatchResult) -> Result<f64> {
    let (positives, ranked) = ranked(class, matches)?;
    // precision after each detection as (tp, rank)
    let mut tp = 0u64;
    let precisions: Vec<(u64, u64)> = ranked
        .iter()
        .enumerate()
        .map(|(k, &(_, is_tp))| {
            tp += u64::from(is_tp);
            (tp, k as u64 + 1)
        })
        .collect();

    let mut best: (u64, u64) = (0, 1);
    let mut sum = DoubleDouble::default();
    for (i, &(_, is_tp)) in ranked.iter().enumerate().rev() {
        let (n, d) = precisions[i];
        if u128::from(n) * u128::from(best.1) > u128::from(best.0) * u128::from(d) {
            best = (n, d);
        }
        if is_tp {
            sum = sum.add(DoubleDouble::quotient(best.0 as f64, best.1 as f64));
        }
    }
    Ok(sum.div(positives as f64).clamp(0.0, 1.0))
}
