//! Procedural multi-image question-answering toolkit.
//!
//! The pipeline runs in four stages, each a module here:
//!
//! 1. [`annotations`] ingests object-detection annotations (COCO-style
//!    JSON or OpenImages-style CSV), applies the box-visibility filter,
//!    and builds the class pool the generators sample from.
//! 2. [`taskgen`] procedurally generates counting, listing, common-class
//!    and odd-one-out queries with exact control over information spread,
//!    distractor count, class count, and sequence length, all seeded and
//!    reproducible.
//! 3. [`prompts`] renders natural-language questions from templated
//!    fragments; [`datasets`] serializes benchmarks and training
//!    conversations and computes corpus statistics.
//! 4. [`scoring`] parses free-form model answers, judges them against
//!    exact ground truth, and aggregates metrics sliced by any control
//!    dimension.
//!
//! Ground truth is exact by construction: every generated query carries
//! the full annotation-derived answer and per-image role tags, and the
//! generators reject any candidate that would make the answer ambiguous.

pub mod annotations;
pub mod datasets;
pub mod english;
pub mod error;
pub mod prompts;
pub mod scoring;
pub mod seed;
pub mod synthetic;
pub mod taskgen;

pub use annotations::{
    load_corpus, load_hierarchy, AnnotationFormat, BoundingBox, CategoryHierarchy, ClassPool,
    Corpus, ImageId, ImageRecord, ObjectInstance,
};
pub use error::{CoreError, Result};
pub use taskgen::{
    Balance, GroundTruth, ImageRole, Plan, PlanEntry, QueryInstance, TaskKind, TaskSpec,
};
