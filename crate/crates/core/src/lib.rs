//! Explain-then-reason visual question answering at desk scale.

pub mod analysis;
pub mod checkpoint;
pub mod diagnostics;
pub mod explainers;
pub mod kernel;
pub mod metrics;
pub mod pipeline;
pub mod reasoner;
pub mod seed;
pub mod synthworld;
pub mod text;
pub mod train;

pub use analysis::{Explained, ResultRecord, Thresholds};
pub use explainers::{CaptionGenerator, WordPredictor};
pub use metrics::{IdfTable, QualityField, QualityScores};
pub use pipeline::{PipelineError, Prepared, RunConfig};
pub use reasoner::{AblationMode, AnswerCandidates, ReasonerModel};
pub use synthworld::{CaptionSource, GenConfig, Instance, QuestionType};
pub use text::{Vocabulary, WordList};
