//! Boxes, detections, annotated images and the annotation file format.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

/// Axis-aligned box: top-left corner plus extent, in pixels.
/// Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BoundingBox { x, y, w, h }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Finite, non-negative origin and strictly positive extent.
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
            && self.x >= 0.0
            && self.y >= 0.0
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(label: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Self {
        Detection {
            label: label.into(),
            bbox,
            confidence,
        }
    }

    pub fn check(&self, width: f64, height: f64) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !self.bbox.is_valid() || !self.bbox.fits_within(width, height) {
            return Err(format!("box {:?} invalid or outside the image", self.bbox));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    #[serde(rename = "label")]
    pub fine_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl GroundTruthObject {
    pub fn new(fine_label: impl Into<String>, bbox: BoundingBox) -> Self {
        GroundTruthObject {
            fine_label: fine_label.into(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub id: String,
    pub width: f64,
    pub height: f64,
    /// Empty for negative (background) images.
    #[serde(default)]
    pub objects: Vec<GroundTruthObject>,
}

impl AnnotatedImage {
    pub fn is_negative(&self) -> bool {
        self.objects.is_empty()
    }
}

/// An annotation file: taxonomy, images, and optional sequence grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub taxonomy: ClassTaxonomy,
    pub images: Vec<AnnotatedImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<Vec<Vec<String>>>,
}

impl Dataset {
    /// Checks every invariant; the first violation is returned, naming the image.
    pub fn validate(&self) -> Result<()> {
        self.taxonomy.ensure_valid()?;

        let mut ids = HashSet::with_capacity(self.images.len());
        for image in &self.images {
            let invalid = |message: String| Error::InvalidImage {
                image: image.id.clone(),
                message,
            };
            if !ids.insert(image.id.as_str()) {
                return Err(invalid("duplicate image id".into()));
            }
            if !(image.width.is_finite() && image.width > 0.0)
                || !(image.height.is_finite() && image.height > 0.0)
            {
                return Err(invalid(format!(
                    "non-positive size {}x{}",
                    image.width, image.height
                )));
            }
            for (i, object) in image.objects.iter().enumerate() {
                if !self.taxonomy.is_fine(&object.fine_label) {
                    return Err(invalid(format!(
                        "object {i} has unknown fine label `{}`",
                        object.fine_label
                    )));
                }
                if !object.bbox.is_valid() || !object.bbox.fits_within(image.width, image.height)
                {
                    return Err(invalid(format!(
                        "object {i} box {:?} is invalid or out of bounds",
                        object.bbox
                    )));
                }
            }
        }

        if let Some(sequences) = &self.sequences {
            let mut seen = HashSet::new();
            for id in sequences.iter().flatten() {
                if !ids.contains(id.as_str()) {
                    return Err(Error::InvalidDataset(format!(
                        "sequence references unknown image {id}"
                    )));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::InvalidImage {
                        image: id.clone(),
                        message: "appears in more than one sequence slot".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn image_index(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|img| img.id == id)
    }

    pub fn positive_count(&self) -> usize {
        self.images.iter().filter(|img| !img.is_negative()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let dataset: Dataset = serde_json::from_str(text).map_err(|source| Error::Parse {
            context: context.to_string(),
            source,
        })?;
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Reads and validates an annotation file. Invalid data is rejected, never repaired.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json(&text, &path.display().to_string())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = dataset.to_json();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
