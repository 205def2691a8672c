//! Interactive, preference-driven extractive multi-document summarization.
//!
//! A user (real or simulated) answers pairwise concept questions under a
//! query budget. The answers train a Bradley–Terry concept ranker, the
//! ranker weights drive a length-constrained sentence selector that builds a
//! candidate pool, an expert's judgments train a summary reward, and a
//! temporal-difference policy picks the final summary.
//!
//! The learners are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod active;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod policy;
pub mod preflearn;
pub mod reward;
pub mod scalar;
pub mod session;
pub mod simulate;
pub mod simuser;
pub mod stats;
pub mod sumgen;
pub mod text;

pub use corpus::{Concept, ConceptUnit, Document, DocumentCluster, EmbeddingTable, FeatureVector, Sentence};
pub use error::{Error, Result};
pub use preflearn::PreferenceRecord;
pub use scalar::Scalar;
pub use sumgen::{Summary, SummaryPool, SummaryRecord};

pub type UtilityModel = preflearn::UtilityModel<f64>;
pub type UtilityModelF32 = preflearn::UtilityModel<f32>;
pub type SimilarityModel = active::SimilarityModel<f64>;
pub type SimilarityModelF32 = active::SimilarityModel<f32>;
pub type RewardModel = reward::RewardModel<f64>;
pub type RewardModelF32 = reward::RewardModel<f32>;
pub type RougeScore = eval::RougeScore<f64>;
