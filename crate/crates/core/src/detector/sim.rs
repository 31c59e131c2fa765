//! Seeded statistical stand-in for a trained detector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use super::profile::{ConfidenceLaw, DetectorProfile};
use super::Detector;
use crate::dataset::{AnnotatedImage, BoundingBox, Detection};
use crate::error::Result;
use crate::seeding::stream;
use crate::taxonomy::ClassTaxonomy;

/// Slot of the per-image stream reserved for the negative-image false positive.
const FALSE_POSITIVE_SLOT: u64 = u64::MAX;
const MIN_EXTENT: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct SimulatedDetector {
    profile: DetectorProfile,
    seed: u64,
    taxonomy: Option<ClassTaxonomy>,
}

impl SimulatedDetector {
    pub fn new(profile: DetectorProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        Ok(SimulatedDetector {
            profile,
            seed,
            taxonomy: None,
        })
    }

    /// Lets a profile keyed by general labels read fine-labelled ground truth:
    /// objects without their own row use the row of their general class.
    pub fn with_taxonomy(mut self, taxonomy: ClassTaxonomy) -> Self {
        self.taxonomy = Some(taxonomy);
        self
    }

    pub fn profile(&self) -> &DetectorProfile {
        &self.profile
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn row_for(&self, true_label: &str) -> Option<&std::collections::BTreeMap<String, f64>> {
        self.profile.confusion.get(true_label).or_else(|| {
            let general = self.taxonomy.as_ref()?.general_of(true_label).ok()?;
            self.profile.confusion.get(general)
        })
    }

    /// True label as seen by this detector's label space.
    fn expected_label<'a>(&'a self, true_label: &'a str) -> &'a str {
        if self.profile.emits(true_label) {
            return true_label;
        }
        self.taxonomy
            .as_ref()
            .and_then(|t| t.general_of(true_label).ok())
            .unwrap_or(true_label)
    }

    fn sample_label(&self, row: &std::collections::BTreeMap<String, f64>, u: f64) -> Option<&str> {
        let mut acc = 0.0;
        for label in &self.profile.label_space {
            if let Some(&p) = row.get(label) {
                acc += p;
                if u < acc {
                    return Some(label);
                }
            }
        }
        None
    }

    fn jitter(&self, rng: &mut ChaCha8Rng, truth: &BoundingBox, width: f64, height: f64) -> BoundingBox {
        let sigma = self.profile.loc_noise_sigma;
        let mut coords = [truth.x, truth.y, truth.w, truth.h];
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma validated");
            for c in &mut coords {
                *c += normal.sample(rng);
            }
        }
        clamp_box(coords, width, height)
    }

    fn random_box(rng: &mut ChaCha8Rng, width: f64, height: f64) -> BoundingBox {
        let w = rng.random_range(0.05..=0.5) * width;
        let h = rng.random_range(0.05..=0.5) * height;
        let x = rng.random::<f64>() * (width - w);
        let y = rng.random::<f64>() * (height - h);
        clamp_box([x, y, w, h], width, height)
    }

    fn false_positive(&self, image: &AnnotatedImage) -> Option<Detection> {
        let fp = &self.profile.negative_fp;
        if fp.rate == 0.0 {
            return None;
        }
        let mut rng = stream(self.seed, &image.id, FALSE_POSITIVE_SLOT);
        if rng.random::<f64>() >= fp.rate {
            return None;
        }
        let u: f64 = rng.random();
        let label = if fp.labels.is_empty() {
            let n = self.profile.label_space.len();
            self.profile.label_space[((u * n as f64) as usize).min(n - 1)].as_str()
        } else {
            self.sample_label(&fp.labels, u)
                .or_else(|| fp.labels.keys().last().map(String::as_str))?
        };
        let bbox = Self::random_box(&mut rng, image.width, image.height);
        let confidence = sample_confidence(&self.profile.confidence, false, &mut rng);
        Some(Detection::new(label, bbox, confidence))
    }
}

/// Keeps a noisy box inside the image with at least one pixel of extent.
fn clamp_box([x, y, w, h]: [f64; 4], width: f64, height: f64) -> BoundingBox {
    let w = w.max(MIN_EXTENT.min(width)).min(width);
    let h = h.max(MIN_EXTENT.min(height)).min(height);
    let x = x.clamp(0.0, width - w);
    let y = y.clamp(0.0, height - h);
    BoundingBox::new(x, y, w, h)
}

pub(crate) fn sample_confidence(law: &ConfidenceLaw, correct: bool, rng: &mut ChaCha8Rng) -> f64 {
    let mean = if correct { law.mean_correct } else { law.mean_wrong };
    match law.beta_shape(mean) {
        Some((a, b)) => Beta::new(a, b)
            .expect("shape validated")
            .sample(rng)
            .clamp(0.0, 1.0),
        None => mean,
    }
}

impl Detector for SimulatedDetector {
    fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>> {
        if image.is_negative() {
            return Ok(self.false_positive(image).into_iter().collect());
        }
        let mut out = Vec::new();
        for (index, object) in image.objects.iter().enumerate() {
            let Some(row) = self.row_for(&object.fine_label) else {
                continue;
            };
            let mut rng = stream(self.seed, &image.id, index as u64);
            let Some(label) = self.sample_label(row, rng.random()) else {
                continue;
            };
            let bbox = self.jitter(&mut rng, &object.bbox, image.width, image.height);
            let correct = label == self.expected_label(&object.fine_label);
            let confidence = sample_confidence(&self.profile.confidence, correct, &mut rng);
            out.push(Detection::new(label, bbox, confidence));
        }
        Ok(out)
    }

    fn label_space(&self) -> Option<&[String]> {
        Some(&self.profile.label_space)
    }
}
