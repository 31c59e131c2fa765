//! Class-agnostic greedy matching of detections to ground truth.
//!
//! A detection may claim a ground-truth box of another class; it then counts
//! as a correctly localized object with the wrong label.

use serde::{Deserialize, Serialize};

use super::iou::iou;
use crate::dataset::{BoundingBox, Dataset, Detection, GroundTruthObject};
use crate::error::{Error, Result};
use crate::taxonomy::{ClassTaxonomy, Level};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub detection: Detection,
    /// Index into the image's ground truth.
    pub gt: Option<usize>,
    pub iou: f64,
    pub correct_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatch {
    /// One entry per detection, in input order.
    pub matches: Vec<DetectionMatch>,
    /// Ground-truth labels at the evaluated level.
    pub ground_truth: Vec<String>,
    /// Ground truth claimed by no detection.
    pub unmatched: Vec<usize>,
}

impl ImageMatch {
    pub fn matched(&self) -> impl Iterator<Item = &DetectionMatch> {
        self.matches.iter().filter(|m| m.gt.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub level: Level,
    pub iou_threshold: f64,
    pub images: Vec<ImageMatch>,
}

impl MatchResult {
    pub fn matched(&self) -> impl Iterator<Item = &DetectionMatch> {
        self.images.iter().flat_map(ImageMatch::matched)
    }

    /// Relabels detections and ground truth at a coarser level. Matches are
    /// kept; only `correct_label` is recomputed.
    pub fn project(&self, taxonomy: &ClassTaxonomy, level: Level) -> Result<MatchResult> {
        let images = self
            .images
            .iter()
            .map(|img| {
                let ground_truth = img
                    .ground_truth
                    .iter()
                    .map(|l| taxonomy.project(l, level).map(str::to_string))
                    .collect::<Result<Vec<_>>>()?;
                let matches = img
                    .matches
                    .iter()
                    .map(|m| {
                        let mut detection = m.detection.clone();
                        detection.label = taxonomy.project(&detection.label, level)?.to_string();
                        let correct_label = m.gt.is_some_and(|g| ground_truth[g] == detection.label);
                        Ok(DetectionMatch {
                            detection,
                            gt: m.gt,
                            iou: m.iou,
                            correct_label,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ImageMatch {
                    matches,
                    ground_truth,
                    unmatched: img.unmatched.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatchResult {
            level,
            iou_threshold: self.iou_threshold,
            images,
        })
    }

    /// Keeps only the images for which `keep(index)` holds.
    pub fn filter_images(&self, mut keep: impl FnMut(usize) -> bool) -> MatchResult {
        MatchResult {
            level: self.level,
            iou_threshold: self.iou_threshold,
            images: self
                .images
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, m)| m.clone())
                .collect(),
        }
    }
}

/// Greedy matching: detections in descending confidence (input order breaks
/// ties) each claim the unclaimed ground truth of highest IoU at or above
/// the threshold (lowest index breaks ties).
pub fn match_boxes(
    detections: &[Detection],
    gt_boxes: &[BoundingBox],
    gt_labels: &[String],
    iou_threshold: f64,
) -> ImageMatch {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
            .then(a.cmp(&b))
    });

    let mut claimed = vec![false; gt_boxes.len()];
    let mut assigned: Vec<(Option<usize>, f64)> = vec![(None, 0.0); detections.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt_box) in gt_boxes.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let overlap = iou(&detections[d].bbox, gt_box);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, overlap)) = best {
            claimed[g] = true;
            assigned[d] = (Some(g), overlap);
        }
    }

    let matches = detections
        .iter()
        .zip(assigned)
        .map(|(det, (gt, overlap))| DetectionMatch {
            correct_label: gt.is_some_and(|g| gt_labels[g] == det.label),
            detection: det.clone(),
            gt,
            iou: overlap,
        })
        .collect();
    ImageMatch {
        matches,
        ground_truth: gt_labels.to_vec(),
        unmatched: (0..gt_boxes.len()).filter(|&g| !claimed[g]).collect(),
    }
}

/// Matches one image's detections against its fine-labelled ground truth.
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &[GroundTruthObject],
    iou_threshold: f64,
) -> ImageMatch {
    let boxes: Vec<BoundingBox> = ground_truth.iter().map(|g| g.bbox).collect();
    let labels: Vec<String> = ground_truth.iter().map(|g| g.fine_label.clone()).collect();
    match_boxes(detections, &boxes, &labels, iou_threshold)
}

pub fn check_iou_threshold(iou_threshold: f64) -> Result<()> {
    if iou_threshold > 0.0 && iou_threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Range(format!("iou threshold {iou_threshold} outside (0, 1]")))
    }
}

/// Matches every image of a dataset, with labels compared at `level`.
pub fn match_dataset(
    dataset: &Dataset,
    detections: &[Vec<Detection>],
    taxonomy: &ClassTaxonomy,
    level: Level,
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_iou_threshold(iou_threshold)?;
    if detections.len() != dataset.images.len() {
        return Err(Error::InvalidDataset(format!(
            "{} detection lists for {} images",
            detections.len(),
            dataset.images.len()
        )));
    }
    let images = dataset
        .images
        .iter()
        .zip(detections)
        .map(|(image, dets)| {
            let boxes: Vec<BoundingBox> = image.objects.iter().map(|o| o.bbox).collect();
            let labels = image
                .objects
                .iter()
                .map(|o| taxonomy.project(&o.fine_label, level).map(str::to_string))
                .collect::<Result<Vec<_>>>()?;
            let projected = dets
                .iter()
                .map(|d| {
                    let mut d = d.clone();
                    d.label = taxonomy.project(&d.label, level)?.to_string();
                    Ok(d)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(match_boxes(&projected, &boxes, &labels, iou_threshold))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchResult {
        level,
        iou_threshold,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(label: &str, x: f64) -> GroundTruthObject {
        GroundTruthObject::new(label, BoundingBox::new(x, 0.0, 10.0, 10.0))
    }

    #[test]
    fn exact_hit() {
        let m = match_detections(
            &[Detection::new("Mars", BoundingBox::new(0.0, 0.0, 10.0, 10.0), 0.9)],
            &[gt("Mars", 0.0)],
            0.5,
        );
        assert_eq!(m.matches[0].gt, Some(0));
        assert!(m.matches[0].correct_label);
        assert!(m.unmatched.is_empty());
    }

    #[test]
    fn duplicate_goes_to_higher_confidence() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(
            &[Detection::new("Mars", b, 0.6), Detection::new("Mars", b, 0.8)],
            &[gt("Mars", 0.0)],
            0.5,
        );
        assert_eq!(m.matches[0].gt, None);
        assert_eq!(m.matches[1].gt, Some(0));
    }

    #[test]
    fn cross_class_match_is_a_label_error() {
        let m = match_detections(
            &[Detection::new("Saturn", BoundingBox::new(1.0, 0.0, 10.0, 10.0), 0.9)],
            &[gt("Mars", 0.0), gt("Saturn", 40.0)],
            0.5,
        );
        assert_eq!(m.matches[0].gt, Some(0));
        assert!(!m.matches[0].correct_label);
        assert_eq!(m.unmatched, vec![1]);
    }

    #[test]
    fn below_threshold_is_unmatched() {
        let m = match_detections(
            &[Detection::new("Mars", BoundingBox::new(5.0, 0.0, 10.0, 10.0), 0.9)],
            &[gt("Mars", 0.0)],
            0.5,
        );
        assert_eq!(m.matches[0].gt, None);
        assert_eq!(m.unmatched, vec![0]);
        assert!(check_iou_threshold(0.0).is_err());
        assert!(check_iou_threshold(1.0).is_ok());
    }
}
