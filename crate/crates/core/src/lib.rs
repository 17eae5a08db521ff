//! Consensus-based age and gender labeling for celebrity speech corpora, and
//! the evaluation harness for age regressors and gender classifiers trained
//! on fixed-dimension speaker embeddings.

pub mod age;
pub mod artifacts;
pub mod consensus;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod ids;
pub mod ingest;
pub mod regression;
pub mod seeding;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
pub use ids::{Gender, SpeakerId};
pub use ingest::{EmbeddingRecord, OriginalLabel, PersonKey, SourceId, SourceRecord, VideoMeta};
