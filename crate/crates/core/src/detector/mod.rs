//! Detector abstraction with a seeded simulator and an external-process backend.

pub mod calibrate;
pub mod external;
pub mod profile;
pub mod sim;

pub use external::{ExternalDetector, ExternalSpec};
pub use profile::{derive_general_profile, ConfidenceLaw, DetectorProfile, NegativeFalsePositives};
pub use sim::SimulatedDetector;

use crate::dataset::{AnnotatedImage, Detection};
use crate::error::Result;

pub trait Detector: Send + Sync {
    fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>>;

    /// Labels this detector may emit, when known up front.
    fn label_space(&self) -> Option<&[String]> {
        None
    }
}

#[derive(Debug)]
pub enum DetectorHandle {
    Simulated(SimulatedDetector),
    External(ExternalDetector),
}

impl Detector for DetectorHandle {
    fn detect(&self, image: &AnnotatedImage) -> Result<Vec<Detection>> {
        match self {
            DetectorHandle::Simulated(d) => d.detect(image),
            DetectorHandle::External(d) => d.detect(image),
        }
    }

    fn label_space(&self) -> Option<&[String]> {
        match self {
            DetectorHandle::Simulated(d) => d.label_space(),
            DetectorHandle::External(d) => d.label_space(),
        }
    }
}

impl From<SimulatedDetector> for DetectorHandle {
    fn from(d: SimulatedDetector) -> Self {
        DetectorHandle::Simulated(d)
    }
}

impl From<ExternalDetector> for DetectorHandle {
    fn from(d: ExternalDetector) -> Self {
        DetectorHandle::External(d)
    }
}

pub fn detect(handle: &DetectorHandle, image: &AnnotatedImage) -> Result<Vec<Detection>> {
    handle.detect(image)
}
