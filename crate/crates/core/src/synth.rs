//! Synthetic annotation sets: one object per positive image, plus negatives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedImage, BoundingBox, Dataset, GroundTruthObject};
use crate::error::{Error, Result};
use crate::seeding::stream;
use crate::taxonomy::ClassTaxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub taxonomy: ClassTaxonomy,
    pub images_per_class: usize,
    #[serde(default)]
    pub negatives: usize,
    /// Group each class's images into runs of this length.
    #[serde(default)]
    pub seq_len: Option<usize>,
    #[serde(default = "default_side")]
    pub width: f64,
    #[serde(default = "default_side")]
    pub height: f64,
}

fn default_side() -> f64 {
    800.0
}

impl SynthConfig {
    pub fn new(taxonomy: ClassTaxonomy, images_per_class: usize, negatives: usize) -> Self {
        SynthConfig {
            taxonomy,
            images_per_class,
            negatives,
            seq_len: None,
            width: default_side(),
            height: default_side(),
        }
    }

    pub fn with_sequences(mut self, seq_len: usize) -> Self {
        self.seq_len = Some(seq_len);
        self
    }
}

fn centi_floor(v: f64) -> f64 {
    (v * 100.0).floor() / 100.0
}

fn random_box(rng: &mut impl Rng, width: f64, height: f64) -> BoundingBox {
    let w = centi_floor(rng.random_range(0.2..0.6) * width);
    let h = centi_floor(rng.random_range(0.2..0.6) * height);
    let x = centi_floor(rng.random::<f64>() * (width - w));
    let y = centi_floor(rng.random::<f64>() * (height - h));
    BoundingBox::new(x, y, w, h)
}

/// Builds a dataset; identical config and seed give an identical dataset.
pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.taxonomy.ensure_valid()?;
    if !(config.width > 0.0 && config.height > 0.0) {
        return Err(Error::InvalidDataset("image size must be positive".into()));
    }
    if config.seq_len == Some(0) {
        return Err(Error::InvalidDataset("seq_len must be at least 1".into()));
    }

    let mut images = Vec::new();
    let mut sequences = Vec::new();
    for fine in config.taxonomy.fine_labels() {
        let mut run: Vec<String> = Vec::new();
        for _ in 0..config.images_per_class {
            let id = format!("img{:06}", images.len() + 1);
            let mut rng = stream(seed, &id, 0);
            let bbox = random_box(&mut rng, config.width, config.height);
            images.push(AnnotatedImage {
                id: id.clone(),
                width: config.width,
                height: config.height,
                objects: vec![GroundTruthObject::new(fine, bbox)],
            });
            if let Some(len) = config.seq_len {
                run.push(id);
                if run.len() == len {
                    sequences.push(std::mem::take(&mut run));
                }
            }
        }
        if !run.is_empty() {
            sequences.push(run);
        }
    }
    for n in 0..config.negatives {
        images.push(AnnotatedImage {
            id: format!("neg{:06}", n + 1),
            width: config.width,
            height: config.height,
            objects: vec![],
        });
    }

    let dataset = Dataset {
        taxonomy: config.taxonomy.clone(),
        images,
        sequences: config.seq_len.map(|_| sequences),
    };
    dataset.validate()?;
    Ok(dataset)
}
