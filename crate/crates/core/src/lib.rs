//! Hierarchical coarse-to-fine detection cascade.
//!
//! A stage-1 detector finds general classes; each general class has a
//! stage-2 detector that refines its objects into fine-grained classes.
//! The crate provides the routing, false-negative-aware evaluation, a seeded
//! detector simulator, and an analytic model of classification error.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod errormodel;
pub mod eval;
pub mod router;
pub mod seeding;
pub mod synth;
pub mod taxonomy;

pub use dataset::{
    load_dataset, save_dataset, AnnotatedImage, BoundingBox, Dataset, Detection, GroundTruthObject,
};
pub use error::{Error, Result};
pub use taxonomy::{general_of, validate_taxonomy, ClassTaxonomy, Level};
