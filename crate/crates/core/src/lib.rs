//! Batch co-salient object detection for image groups.
//!
//! The pipeline fuses per-image saliency with group-level correspondence:
//! SLIC superpixels carry segment descriptors pooled over multi-regional
//! foreground sets, a small feed-forward scorer (or a model-free heuristic)
//! rates each segment against the group, and seed propagation over
//! per-image and group-integrated affinity graphs refines the scores into
//! final co-saliency maps and co-segmentation masks.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod graph;
pub mod imagio;
pub mod pipeline;
pub mod scorer;
pub mod superpixel;
pub mod synth;

pub use error::{Error, Result};
pub use fusion::{GroupContext, Params};
pub use pipeline::{detect_group, DetectOutput, GroupInput, ScorerKind};
