//! Rehabilitation exercise assessment with a chat-completion language model.
//!
//! The pipeline runs skeleton repetitions ([`skeleton`]) through
//! per-exercise kinematic features ([`features`]) into few-shot prompts
//! ([`prompt`]), sends them through a caching gateway ([`gateway`]), parses
//! the answers ([`parser`]) and scores them ([`metrics`]). [`runner`] ties
//! the steps into experiment grids.

pub mod features;
pub mod gateway;
pub mod geometry;
pub mod matrix;
pub mod metrics;
pub mod parser;
pub mod prompt;
pub mod runner;
pub mod skeleton;
pub mod synthetic;

pub use features::{extract_features, FeatureDef, FeatureSequence, FeatureSpec, Primitive};
pub use gateway::{CompletionRecord, LlmGateway, ModelEndpointConfig, OracleConfig, TransportStatus};
pub use geometry::Vec3;
pub use matrix::Matrix;
pub use metrics::{ConfusionCounts, MetricsReport};
pub use parser::{parse, AssessmentOutcome, OutputFormat, ParseStatus};
pub use prompt::{PromptBundle, PromptTechnique, SerializationPolicy, TechniqueKind};
pub use runner::{ExperimentCellResult, ExperimentConfig, Runner, RunError};
pub use skeleton::{DatasetId, Label, RepetitionSample, SampleId, Side, SkeletonSpec, SplitPolicy};
