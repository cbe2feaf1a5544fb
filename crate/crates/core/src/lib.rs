//! Incremental sequential recommendation with a shared-encoder autoencoder.
//!
//! One sigmoid encoder maps rows of the user-item interaction matrix R, the
//! item transition matrix T and its transpose into a common hidden space;
//! three linear decoders reconstruct them. Next-item scores combine a
//! collaborative term, a one-hop transition term and a personalized two-hop
//! term. New interactions only update the input matrices and the affected
//! cached embeddings, so serving never retrains.
//!
//! Pipeline: [`ingest`] → [`matrices`] → [`model`] → [`scoring`] /
//! [`incremental`] → [`eval`], with [`persist`] for checkpoints.

pub mod error;
pub mod eval;
pub mod incremental;
pub mod ingest;
pub mod matrices;
pub mod model;
pub mod persist;
pub mod scoring;

pub use error::{Error, Result};
pub use incremental::{EmbeddingCache, NaiveReplayer, Prediction, ReplayOptions, ReplayRecord, Session};
pub use ingest::{DatasetFormat, Event, InteractionLog, PreparedDataset, SplitLog, Vocabulary};
pub use matrices::{MatrixState, Touched};
pub use model::{Activation, ModelParams, TrainConfig, TransitionTransform};
pub use scoring::{InferenceConfig, Normalization, ScoreVector};
