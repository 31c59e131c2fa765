//! Two-stage cascade: a general-class detector gates which fine-grained
//! detectors see each image.
//!
//! In per-image mode ([`route_v1`]) an image goes to the stage-2 detector of
//! every general class that stage 1 found on it with confidence `>= tau`.
//! In sequence mode ([`route_v2`]) a class triggered on any image of a
//! sequence sends the whole sequence to that class's detector. Images are
//! always passed unchanged; stage 2 never sees crops.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedImage, Dataset, Detection};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    V1,
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_mode")]
    pub mode: RoutingMode,
}

fn default_tau() -> f64 {
    0.5
}

fn default_mode() -> RoutingMode {
    RoutingMode::V1
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            tau: default_tau(),
            mode: default_mode(),
        }
    }
}

impl RoutingConfig {
    pub fn new(tau: f64, mode: RoutingMode) -> Result<Self> {
        let config = RoutingConfig { tau, mode };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.tau) {
            Ok(())
        } else {
            Err(Error::Range(format!("tau {} outside [0, 1]", self.tau)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTrace {
    pub image_id: String,
    pub stage1: Vec<Detection>,
    /// General classes stage 1 found on this image at or above `tau`.
    pub triggered: BTreeSet<String>,
    /// Stage-2 detectors run on this image, in taxonomy order.
    pub invoked: Vec<String>,
    pub stage2: BTreeMap<String, Vec<Detection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub mode: RoutingMode,
    pub tau: f64,
    pub images: Vec<ImageTrace>,
    pub stage1_inferences: usize,
    pub stage2_inferences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutput {
    /// Final fine-grained detections, one list per dataset image.
    pub detections: Vec<Vec<Detection>>,
    pub trace: RoutingTrace,
}

/// Positive images split by whether stage 2 covered all of their objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub routed_positive_images: usize,
    pub fn_images: usize,
}

impl CascadeOutput {
    /// An image counts as a false negative when any of its objects belongs to a
    /// general class whose stage-2 detector was not run on it.
    pub fn coverage(&self, dataset: &Dataset, taxonomy: &ClassTaxonomy) -> Result<Coverage> {
        let mut coverage = Coverage {
            routed_positive_images: 0,
            fn_images: 0,
        };
        for (image, trace) in dataset.images.iter().zip(&self.trace.images) {
            if image.is_negative() {
                continue;
            }
            let mut covered = true;
            for object in &image.objects {
                let g = taxonomy.general_of(&object.fine_label)?;
                covered &= trace.invoked.iter().any(|i| i == g);
            }
            if covered {
                coverage.routed_positive_images += 1;
            } else {
                coverage.fn_images += 1;
            }
        }
        Ok(coverage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeVsFlat {
    pub tree_inferences: usize,
    pub flat_inferences: usize,
    pub ratio: f64,
}

/// Inference count of the cascade against running every image through each
/// of `n_fine_networks` independent detectors.
pub fn compare_tree_vs_flat(trace: &RoutingTrace, n_fine_networks: usize) -> TreeVsFlat {
    let n = n_fine_networks.max(1);
    let tree = trace.stage1_inferences + trace.stage2_inferences;
    let flat = trace.stage1_inferences * n;
    TreeVsFlat {
        tree_inferences: tree,
        flat_inferences: flat,
        ratio: if tree == 0 { 1.0 } else { flat as f64 / tree as f64 },
    }
}

fn with_image<T>(image: &AnnotatedImage, result: Result<T>) -> Result<T> {
    result.map_err(|source| Error::Detector {
        image: image.id.clone(),
        source: Box::new(source),
    })
}

fn run_stage1<D: Detector + ?Sized>(
    image: &AnnotatedImage,
    stage1: &D,
    taxonomy: &ClassTaxonomy,
    tau: f64,
) -> Result<(Vec<Detection>, BTreeSet<String>)> {
    let detections = with_image(image, stage1.detect(image))?;
    let mut triggered = BTreeSet::new();
    for det in &detections {
        if !taxonomy.is_general(&det.label) {
            return with_image(
                image,
                Err(Error::Protocol(format!(
                    "stage-1 label `{}` is not a general class",
                    det.label
                ))),
            );
        }
        if det.confidence >= tau {
            triggered.insert(det.label.clone());
        }
    }
    Ok((detections, triggered))
}

fn run_stage2<D: Detector>(
    image: &AnnotatedImage,
    invoked: &[String],
    stage2: &BTreeMap<String, D>,
    taxonomy: &ClassTaxonomy,
) -> Result<(BTreeMap<String, Vec<Detection>>, Vec<Detection>)> {
    let mut per_network = BTreeMap::new();
    let mut merged = Vec::new();
    for general in invoked {
        let detector = stage2
            .get(general)
            .ok_or_else(|| Error::MissingStage2(general.clone()))?;
        let detections = with_image(image, detector.detect(image))?;
        let scope = taxonomy.fine_of(general)?;
        if let Some(bad) = detections.iter().find(|d| !scope.contains(&d.label)) {
            return with_image(
                image,
                Err(Error::Protocol(format!(
                    "stage-2 detector for `{general}` emitted `{}`",
                    bad.label
                ))),
            );
        }
        merged.extend(detections.iter().cloned());
        per_network.insert(general.clone(), detections);
    }
    Ok((per_network, merged))
}

fn check_stage2<D>(stage2: &BTreeMap<String, D>, taxonomy: &ClassTaxonomy) -> Result<()> {
    match taxonomy.general_labels().find(|g| !stage2.contains_key(*g)) {
        Some(g) => Err(Error::MissingStage2(g.to_string())),
        None => Ok(()),
    }
}

fn in_taxonomy_order(taxonomy: &ClassTaxonomy, set: &BTreeSet<String>) -> Vec<String> {
    taxonomy
        .general_labels()
        .filter(|g| set.contains(*g))
        .map(str::to_string)
        .collect()
}

fn assemble(
    mode: RoutingMode,
    tau: f64,
    per_image: Vec<(ImageTrace, Vec<Detection>)>,
) -> CascadeOutput {
    let stage1_inferences = per_image.len();
    let stage2_inferences = per_image.iter().map(|(t, _)| t.invoked.len()).sum();
    let (images, detections) = per_image.into_iter().unzip();
    CascadeOutput {
        detections,
        trace: RoutingTrace {
            mode,
            tau,
            images,
            stage1_inferences,
            stage2_inferences,
        },
    }
}

/// Per-image routing.
pub fn route_v1<D1, D2>(
    dataset: &Dataset,
    stage1: &D1,
    stage2: &BTreeMap<String, D2>,
    taxonomy: &ClassTaxonomy,
    config: &RoutingConfig,
) -> Result<CascadeOutput>
where
    D1: Detector + ?Sized,
    D2: Detector,
{
    if config.mode != RoutingMode::V1 {
        return Err(Error::ModeMismatch {
            expected: RoutingMode::V1,
            actual: config.mode,
        });
    }
    config.validate()?;
    check_stage2(stage2, taxonomy)?;

    let per_image = dataset
        .images
        .par_iter()
        .map(|image| {
            let (stage1_dets, triggered) = run_stage1(image, stage1, taxonomy, config.tau)?;
            let invoked = in_taxonomy_order(taxonomy, &triggered);
            let (stage2_dets, merged) = run_stage2(image, &invoked, stage2, taxonomy)?;
            let trace = ImageTrace {
                image_id: image.id.clone(),
                stage1: stage1_dets,
                triggered,
                invoked,
                stage2: stage2_dets,
            };
            Ok((trace, merged))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(RoutingMode::V1, config.tau, per_image))
}

/// Sequence routing. Images not listed in any sequence form their own
/// single-image sequence.
pub fn route_v2<D1, D2>(
    dataset: &Dataset,
    stage1: &D1,
    stage2: &BTreeMap<String, D2>,
    taxonomy: &ClassTaxonomy,
    config: &RoutingConfig,
) -> Result<CascadeOutput>
where
    D1: Detector + ?Sized,
    D2: Detector,
{
    if config.mode != RoutingMode::V2 {
        return Err(Error::ModeMismatch {
            expected: RoutingMode::V2,
            actual: config.mode,
        });
    }
    config.validate()?;
    let sequences = dataset.sequences.as_ref().ok_or(Error::MissingSequences)?;
    check_stage2(stage2, taxonomy)?;

    // group id for every image
    let mut group_of = vec![usize::MAX; dataset.images.len()];
    let index: BTreeMap<&str, usize> = dataset
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.id.as_str(), i))
        .collect();
    for (g, seq) in sequences.iter().enumerate() {
        for id in seq {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidDataset(format!("sequence references unknown image {id}")))?;
            group_of[i] = g;
        }
    }
    let mut next_group = sequences.len();
    for slot in group_of.iter_mut().filter(|g| **g == usize::MAX) {
        *slot = next_group;
        next_group += 1;
    }

    // pass 1: stage 1 everywhere
    let stage1_results = dataset
        .images
        .par_iter()
        .map(|image| run_stage1(image, stage1, taxonomy, config.tau))
        .collect::<Result<Vec<_>>>()?;

    let mut group_triggers = vec![BTreeSet::new(); next_group];
    for (i, (_, triggered)) in stage1_results.iter().enumerate() {
        group_triggers[group_of[i]].extend(triggered.iter().cloned());
    }
    let group_invoked: Vec<Vec<String>> = group_triggers
        .iter()
        .map(|set| in_taxonomy_order(taxonomy, set))
        .collect();

    // pass 2: stage 2 on every image of each triggered sequence
    let per_image = dataset
        .images
        .par_iter()
        .zip(stage1_results)
        .enumerate()
        .map(|(i, (image, (stage1_dets, triggered)))| {
            let invoked = group_invoked[group_of[i]].clone();
            let (stage2_dets, merged) = run_stage2(image, &invoked, stage2, taxonomy)?;
            let trace = ImageTrace {
                image_id: image.id.clone(),
                stage1: stage1_dets,
                triggered,
                invoked,
                stage2: stage2_dets,
            };
            Ok((trace, merged))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(RoutingMode::V2, config.tau, per_image))
}

/// Dispatches on `config.mode`.
pub fn route<D1, D2>(
    dataset: &Dataset,
    stage1: &D1,
    stage2: &BTreeMap<String, D2>,
    taxonomy: &ClassTaxonomy,
    config: &RoutingConfig,
) -> Result<CascadeOutput>
where
    D1: Detector + ?Sized,
    D2: Detector,
{
    match config.mode {
        RoutingMode::V1 => route_v1(dataset, stage1, stage2, taxonomy, config),
        RoutingMode::V2 => route_v2(dataset, stage1, stage2, taxonomy, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BoundingBox, GroundTruthObject};
    use crate::detector::{DetectorProfile, SimulatedDetector};

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

    fn image(id: &str, label: Option<&str>) -> AnnotatedImage {
        AnnotatedImage {
            id: id.into(),
            width: 800.0,
            height: 800.0,
            objects: label
                .map(|l| vec![GroundTruthObject::new(l, BoundingBox::new(50.0, 60.0, 300.0, 200.0))])
                .unwrap_or_default(),
        }
    }

    fn dataset(images: Vec<AnnotatedImage>, sequences: Option<Vec<Vec<String>>>) -> Dataset {
        Dataset {
            taxonomy: taxonomy(),
            images,
            sequences,
        }
    }

    fn perfect_stage1() -> SimulatedDetector {
        SimulatedDetector::new(DetectorProfile::identity(&["dog", "planet"]), 1)
            .unwrap()
            .with_taxonomy(taxonomy())
    }

    fn perfect_stage2() -> BTreeMap<String, SimulatedDetector> {
        BTreeMap::from([
            (
                "dog".to_string(),
                SimulatedDetector::new(DetectorProfile::identity(&["Pekinese", "Spaniel"]), 2).unwrap(),
            ),
            (
                "planet".to_string(),
                SimulatedDetector::new(DetectorProfile::identity(&["Mars", "Saturn"]), 3).unwrap(),
            ),
        ])
    }

    /// Stage 1 that detects dogs only on images whose id is listed.
    struct Selective(Vec<&'static str>);

    impl Detector for Selective {
        fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>> {
            Ok(if self.0.contains(&image.id.as_str()) {
                vec![Detection::new("dog", image.objects[0].bbox, 0.95)]
            } else {
                vec![]
            })
        }
    }

    #[test]
    fn noiseless_end_to_end() {
        let d = dataset(vec![image("p", Some("Pekinese"))], None);
        let out = route_v1(&d, &perfect_stage1(), &perfect_stage2(), &taxonomy(), &RoutingConfig::default()).unwrap();
        assert_eq!(out.detections[0].len(), 1);
        assert_eq!(out.detections[0][0].label, "Pekinese");
        assert_eq!(out.detections[0][0].bbox, d.images[0].objects[0].bbox);
        assert_eq!(out.trace.images[0].invoked, vec!["dog"]);
        assert_eq!((out.trace.stage1_inferences, out.trace.stage2_inferences), (1, 1));
    }

    #[test]
    fn tau_one_blocks_everything() {
        let d = dataset(
            (0..20).map(|i| image(&format!("i{i}"), Some("Mars"))).collect(),
            None,
        );
        let cfg = RoutingConfig::new(1.0, RoutingMode::V1).unwrap();
        let out = route_v1(&d, &perfect_stage1(), &perfect_stage2(), &taxonomy(), &cfg).unwrap();
        assert_eq!(out.trace.stage2_inferences, 0);
        assert_eq!(out.trace.stage1_inferences, 20);
        assert!(out.detections.iter().all(Vec::is_empty));
    }

    #[test]
    fn v2_recovers_stage1_misses_within_a_sequence() {
        let imgs = vec![
            image("s1", Some("Pekinese")),
            image("s2", Some("Pekinese")),
            image("s3", Some("Pekinese")),
        ];
        let seq = vec![vec!["s1".to_string(), "s2".to_string(), "s3".to_string()]];
        let d = dataset(imgs, Some(seq));
        let stage1 = Selective(vec!["s2"]);
        let v1 = route_v1(&d, &stage1, &perfect_stage2(), &taxonomy(), &RoutingConfig::default()).unwrap();
        let v2 = route_v2(
            &d,
            &stage1,
            &perfect_stage2(),
            &taxonomy(),
            &RoutingConfig::new(0.5, RoutingMode::V2).unwrap(),
        )
        .unwrap();
        assert_eq!(v1.detections.iter().map(Vec::len).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(v2.detections.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert_eq!(v2.trace.stage2_inferences, 3);
        assert_eq!(v1.coverage(&d, &taxonomy()).unwrap().fn_images, 2);
        assert_eq!(v2.coverage(&d, &taxonomy()).unwrap().fn_images, 0);
    }

    #[test]
    fn v2_untriggered_sequence_runs_nothing() {
        let d = dataset(
            vec![image("a", Some("Mars")), image("b", Some("Mars"))],
            Some(vec![vec!["a".into(), "b".into()]]),
        );
        let out = route_v2(
            &d,
            &Selective(vec![]),
            &perfect_stage2(),
            &taxonomy(),
            &RoutingConfig::new(0.5, RoutingMode::V2).unwrap(),
        )
        .unwrap();
        assert_eq!(out.trace.stage2_inferences, 0);
    }

    #[test]
    fn errors() {
        let d = dataset(vec![image("p", Some("Pekinese"))], None);
        let mut s2 = perfect_stage2();
        s2.remove("planet");
        assert!(matches!(
            route_v1(&d, &perfect_stage1(), &s2, &taxonomy(), &RoutingConfig::default()),
            Err(Error::MissingStage2(g)) if g == "planet"
        ));
        let v2cfg = RoutingConfig::new(0.5, RoutingMode::V2).unwrap();
        assert!(matches!(
            route_v2(&d, &perfect_stage1(), &perfect_stage2(), &taxonomy(), &v2cfg),
            Err(Error::MissingSequences)
        ));
        assert!(matches!(
            route_v1(&d, &perfect_stage1(), &perfect_stage2(), &taxonomy(), &v2cfg),
            Err(Error::ModeMismatch { .. })
        ));
        assert!(RoutingConfig::new(1.5, RoutingMode::V1).is_err());
    }

    #[test]
    fn stage1_emitting_fine_labels_is_a_protocol_error() {
        struct Wrong;
        impl Detector for Wrong {
            fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>> {
                Ok(vec![Detection::new("Pekinese", image.objects[0].bbox, 0.9)])
            }
        }
        let d = dataset(vec![image("p", Some("Pekinese"))], None);
        let err = route_v1(&d, &Wrong, &perfect_stage2(), &taxonomy(), &RoutingConfig::default()).unwrap_err();
        assert!(err.is_detector_failure());
        assert!(err.to_string().contains("image p"));
    }

    #[test]
    fn tree_vs_flat_arithmetic() {
        let trace = |stage2| RoutingTrace {
            mode: RoutingMode::V1,
            tau: 0.5,
            images: vec![],
            stage1_inferences: 100,
            stage2_inferences: stage2,
        };
        let routed = compare_tree_vs_flat(&trace(100), 5);
        assert_eq!((routed.tree_inferences, routed.flat_inferences), (200, 500));
        assert_eq!(routed.ratio, 2.5);
        let none = compare_tree_vs_flat(&trace(0), 5);
        assert_eq!((none.tree_inferences, none.ratio), (100, 5.0));
    }
}
