//! Detection evaluation: matching, AP/mAP, classification error, confusion.

pub mod ap;
pub mod iou;
pub mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use ap::{average_precision, pr_curve, PrPoint};
pub use iou::iou;
pub use matching::{
    match_boxes, match_dataset, match_detections, DetectionMatch, ImageMatch, MatchResult,
    DEFAULT_IOU_THRESHOLD,
};

use crate::dataset::{BoundingBox, Dataset, Detection};
use crate::error::{Error, Result};
use crate::router::{CascadeOutput, Coverage};
use crate::taxonomy::{ClassTaxonomy, Level, MISS_LABEL};

/// true label -> predicted label (or [`MISS_LABEL`]) -> count
pub type ConfusionMatrix = BTreeMap<String, BTreeMap<String, usize>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceCounters {
    pub stage1_inferences: usize,
    pub stage2_inferences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub iou_threshold: f64,
    /// AP per class with at least one ground-truth object.
    pub per_class_ap: BTreeMap<String, f64>,
    /// Mean of `per_class_ap`.
    pub map: f64,
    /// `None` when nothing was matched.
    pub classification_error: Option<f64>,
    pub matched_detections: usize,
    pub mislabeled_detections: usize,
    pub missed_objects: usize,
    pub confusion: ConfusionMatrix,
    /// Positive images that routing kept from the stage-2 detector of one of
    /// their objects' classes. Zero outside cascades.
    pub fn_image_count: usize,
    /// Cascade mAP with false-negative images scored as zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_accounted_map: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceCounters>,
}

/// Fraction of matched detections carrying the wrong label.
pub fn classification_error(matches: &MatchResult) -> Result<f64> {
    let (matched, wrong) = label_counts(matches);
    if matched == 0 {
        return Err(Error::NoMatches);
    }
    Ok(wrong as f64 / matched as f64)
}

fn label_counts(matches: &MatchResult) -> (usize, usize) {
    matches.matched().fold((0, 0), |(n, wrong), m| {
        (n + 1, wrong + usize::from(!m.correct_label))
    })
}

/// Counts matched detections by (true, predicted) label at `level`;
/// unclaimed ground truth goes to the [`MISS_LABEL`] column.
pub fn confusion_matrix(
    matches: &MatchResult,
    level: Level,
    taxonomy: &ClassTaxonomy,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for img in &matches.images {
        for m in img.matched() {
            let truth = taxonomy.project(&img.ground_truth[m.gt.expect("matched")], level)?;
            let pred = taxonomy.project(&m.detection.label, level)?;
            *cm.entry(truth.to_string())
                .or_default()
                .entry(pred.to_string())
                .or_insert(0) += 1;
        }
        for &g in &img.unmatched {
            let truth = taxonomy.project(&img.ground_truth[g], level)?;
            *cm.entry(truth.to_string())
                .or_default()
                .entry(MISS_LABEL.to_string())
                .or_insert(0) += 1;
        }
    }
    Ok(cm)
}

/// Cascade mAP where every false-negative image adds a zero-precision term:
/// `stage2_map * routed / (routed + fn_images)`.
pub fn map_with_fn_accounting(stage2_map: f64, routed_positive_images: usize, fn_images: usize) -> Result<f64> {
    let total = routed_positive_images + fn_images;
    if total == 0 {
        return Err(Error::ZeroDenominator("false-negative accounting"));
    }
    if !(0.0..=1.0).contains(&stage2_map) {
        return Err(Error::Range(format!("stage-2 mAP {stage2_map} outside [0, 1]")));
    }
    if fn_images == 0 {
        return Ok(stage2_map);
    }
    Ok(stage2_map * routed_positive_images as f64 / total as f64)
}

/// Per-class AP and mAP over the classes of `level` that have ground truth.
pub fn ap_table(matches: &MatchResult, taxonomy: &ClassTaxonomy) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut per_class = BTreeMap::new();
    for class in taxonomy.labels(matches.level) {
        match average_precision(class, matches) {
            Ok(ap) => {
                per_class.insert(class.to_string(), ap);
            }
            Err(Error::NoGroundTruth(_)) => {}
            Err(e) => return Err(e),
        }
    }
    // summed in taxonomy order for a fixed rounding sequence
    let total: f64 = taxonomy
        .labels(matches.level)
        .iter()
        .filter_map(|c| per_class.get(*c))
        .sum();
    let map = if per_class.is_empty() { 0.0 } else { total / per_class.len() as f64 };
    Ok((per_class, map))
}

pub fn report_from_matches(matches: &MatchResult, taxonomy: &ClassTaxonomy) -> Result<EvalReport> {
    let (per_class_ap, map) = ap_table(matches, taxonomy)?;
    let (matched, wrong) = label_counts(matches);
    Ok(EvalReport {
        level: matches.level,
        iou_threshold: matches.iou_threshold,
        per_class_ap,
        map,
        classification_error: (matched > 0).then(|| wrong as f64 / matched as f64),
        matched_detections: matched,
        mislabeled_detections: wrong,
        missed_objects: matches.images.iter().map(|i| i.unmatched.len()).sum(),
        confusion: confusion_matrix(matches, matches.level, taxonomy)?,
        fn_image_count: 0,
        fn_accounted_map: None,
        inference: None,
    })
}

/// Evaluates one detection list per image at `level`.
pub fn evaluate(
    dataset: &Dataset,
    detections: &[Vec<Detection>],
    taxonomy: &ClassTaxonomy,
    level: Level,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let matches = match_dataset(dataset, detections, taxonomy, level, iou_threshold)?;
    report_from_matches(&matches, taxonomy)
}

/// Positive images whose objects were not all covered by an invoked stage-2 detector.
pub fn fn_image_flags(dataset: &Dataset, output: &CascadeOutput, taxonomy: &ClassTaxonomy) -> Result<Vec<bool>> {
    dataset
        .images
        .iter()
        .zip(&output.trace.images)
        .map(|(image, trace)| {
            for object in &image.objects {
                let g = taxonomy.general_of(&object.fine_label)?;
                if !trace.invoked.iter().any(|i| i == g) {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect()
}

/// Evaluates a cascade's final detections at the fine level.
///
/// AP is computed over every image except false-negative images; the
/// false-negative-accounted mAP then scales it by the routed share of
/// positive images. Classification error and the confusion matrix use all
/// images.
pub fn evaluate_cascade(
    dataset: &Dataset,
    output: &CascadeOutput,
    taxonomy: &ClassTaxonomy,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let matches = match_dataset(dataset, &output.detections, taxonomy, Level::Fine, iou_threshold)?;
    let flags = fn_image_flags(dataset, output, taxonomy)?;
    let routed = matches.filter_images(|i| !flags[i]);

    let mut report = report_from_matches(&matches, taxonomy)?;
    let (per_class_ap, map) = ap_table(&routed, taxonomy)?;
    let coverage = output.coverage(dataset, taxonomy)?;
    report.per_class_ap = per_class_ap;
    report.map = map;
    report.fn_image_count = coverage.fn_images;
    report.fn_accounted_map = fn_accounted(map, coverage)?;
    report.inference = Some(InferenceCounters {
        stage1_inferences: output.trace.stage1_inferences,
        stage2_inferences: output.trace.stage2_inferences,
    });
    Ok(report)
}

fn fn_accounted(map: f64, coverage: Coverage) -> Result<Option<f64>> {
    if coverage.routed_positive_images + coverage.fn_images == 0 {
        return Ok(None);
    }
    map_with_fn_accounting(map, coverage.routed_positive_images, coverage.fn_images).map(Some)
}

/// Stage-1 output evaluated against ground truth projected to general classes.
pub fn evaluate_stage1(
    dataset: &Dataset,
    output: &CascadeOutput,
    taxonomy: &ClassTaxonomy,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let detections: Vec<Vec<Detection>> = output.trace.images.iter().map(|t| t.stage1.clone()).collect();
    let mut report = evaluate(dataset, &detections, taxonomy, Level::General, iou_threshold)?;
    report.inference = Some(InferenceCounters {
        stage1_inferences: output.trace.stage1_inferences,
        stage2_inferences: 0,
    });
    Ok(report)
}

/// Matches each stage-2 detector's output only against ground truth of its
/// own general class: the stage-2 detectors' accuracy on correctly routed objects.
pub fn stage2_in_scope_matches(
    dataset: &Dataset,
    output: &CascadeOutput,
    taxonomy: &ClassTaxonomy,
    iou_threshold: f64,
) -> Result<MatchResult> {
    matching::check_iou_threshold(iou_threshold)?;
    let mut images = Vec::new();
    for (image, trace) in dataset.images.iter().zip(&output.trace.images) {
        for (general, dets) in &trace.stage2 {
            let mut boxes: Vec<BoundingBox> = Vec::new();
            let mut labels = Vec::new();
            for object in &image.objects {
                if taxonomy.general_of(&object.fine_label)? == general {
                    boxes.push(object.bbox);
                    labels.push(object.fine_label.clone());
                }
            }
            images.push(match_boxes(dets, &boxes, &labels, iou_threshold));
        }
    }
    Ok(MatchResult {
        level: Level::Fine,
        iou_threshold,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedImage, GroundTruthObject};

    fn taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::new(
            [
                ("dog".to_string(), vec!["Pekinese".to_string(), "Spaniel".to_string()]),
                ("planet".to_string(), vec!["Mars".to_string(), "Saturn".to_string()]),
            ],
            "negative",
        )
        .unwrap()
    }

    fn single(truth: &str, pred: &str) -> (AnnotatedImage, Vec<Detection>) {
        let b = BoundingBox::new(10.0, 10.0, 50.0, 50.0);
        (
            AnnotatedImage {
                id: format!("{truth}-{pred}"),
                width: 100.0,
                height: 100.0,
                objects: vec![GroundTruthObject::new(truth, b)],
            },
            vec![Detection::new(pred, b, 0.9)],
        )
    }

    fn dataset(pairs: &[(&str, &str)]) -> (Dataset, Vec<Vec<Detection>>) {
        let mut images = Vec::new();
        let mut dets = Vec::new();
        for (i, (t, p)) in pairs.iter().enumerate() {
            let (mut img, d) = single(t, p);
            img.id = format!("{i}");
            images.push(img);
            dets.push(d);
        }
        (
            Dataset {
                taxonomy: taxonomy(),
                images,
                sequences: None,
            },
            dets,
        )
    }

    #[test]
    fn fn_accounting_fixtures() {
        assert_eq!(map_with_fn_accounting(0.8, 10, 0).unwrap(), 0.8);
        assert_eq!(map_with_fn_accounting(0.8, 0, 7).unwrap(), 0.0);
        let v = map_with_fn_accounting(0.95, 95, 5).unwrap();
        assert!((v - 0.9025).abs() < 1e-15, "{v}");
        assert!(matches!(map_with_fn_accounting(0.5, 0, 0), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn classification_error_ratio() {
        let mut pairs = vec![("Mars", "Mars"); 88];
        pairs.extend(vec![("Mars", "Saturn"); 12]);
        let (d, dets) = dataset(&pairs);
        let m = match_dataset(&d, &dets, &taxonomy(), Level::Fine, 0.5).unwrap();
        assert_eq!(classification_error(&m).unwrap(), 0.12);
        let (d, _) = dataset(&[("Mars", "Mars")]);
        let empty = match_dataset(&d, &[vec![]], &taxonomy(), Level::Fine, 0.5).unwrap();
        assert!(matches!(classification_error(&empty), Err(Error::NoMatches)));
    }

    #[test]
    fn confusion_projects_to_general() {
        let (d, dets) = dataset(&[
            ("Pekinese", "Spaniel"),
            ("Pekinese", "Pekinese"),
            ("Spaniel", "Pekinese"),
            ("Mars", "Spaniel"),
        ]);
        let m = match_dataset(&d, &dets, &taxonomy(), Level::Fine, 0.5).unwrap();
        let fine = confusion_matrix(&m, Level::Fine, &taxonomy()).unwrap();
        assert_eq!(fine["Pekinese"]["Spaniel"], 1);
        let general = confusion_matrix(&m, Level::General, &taxonomy()).unwrap();
        assert_eq!(general["dog"]["dog"], 3);
        assert_eq!(general["planet"]["dog"], 1);
        let projected = m.project(&taxonomy(), Level::General).unwrap();
        assert_eq!(classification_error(&projected).unwrap(), 0.25);
        assert_eq!(classification_error(&m).unwrap(), 0.75);
    }

    #[test]
    fn misses_land_in_miss_column() {
        let (d, _) = dataset(&[("Mars", "Mars"), ("Saturn", "Saturn")]);
        let m = match_dataset(&d, &[vec![], vec![]], &taxonomy(), Level::Fine, 0.5).unwrap();
        let cm = confusion_matrix(&m, Level::Fine, &taxonomy()).unwrap();
        assert_eq!(cm["Mars"][MISS_LABEL], 1);
        assert_eq!(cm["Saturn"][MISS_LABEL], 1);
    }

    #[test]
    fn perfect_report() {
        let (d, dets) = dataset(&[("Mars", "Mars"), ("Pekinese", "Pekinese")]);
        let r = evaluate(&d, &dets, &taxonomy(), Level::Fine, 0.5).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.classification_error, Some(0.0));
        assert_eq!(r.per_class_ap.len(), 2);
    }
}
