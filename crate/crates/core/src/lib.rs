//! Unsupervised cross-lingual word-embedding mapping.
//!
//! An orthogonal map `W` from a source embedding space to a target space is
//! learned in three stages:
//!
//! 1. [`initializer`]: a warm start from isometry-invariant similarity
//!    signatures, matched across languages and solved with Procrustes.
//! 2. [`trainer`]: minibatch minimization of the kernel maximum mean
//!    discrepancy ([`mmd`]) between the mapped source and the target
//!    distribution, with an orthogonality retraction after every step.
//! 3. [`lexicon::refine`]: iterative Procrustes on mutual CSLS neighbours.
//!
//! [`evaluator`] scores mappings on lexicon induction and word similarity,
//! [`pipeline`] chains the stages with per-stage switches, and
//! [`synthetic`] builds rotated test problems with a known answer.

pub mod embeddings;
pub mod error;
pub mod evaluator;
pub mod initializer;
pub mod lexicon;
pub mod linalg;
pub mod mmd;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use embeddings::{EmbeddingSpace, Lexicon, NormStep, ScoredPair, Vocabulary};
pub use error::{Error, Result};
pub use evaluator::{BliReport, FrequencyBuckets};
pub use initializer::InitConfig;
pub use lexicon::{Method, RetrievalConfig};
pub use mmd::{KernelSpec, MappingMatrix, Projector};
pub use trainer::{TrainConfig, TrainHistory};
