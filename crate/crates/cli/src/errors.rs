//! Error categories and their exit codes.

use std::fmt;
use std::io;
use std::path::PathBuf;

use xvqa::analysis::AnalysisError;
use xvqa::checkpoint::CheckpointError;
use xvqa::explainers::ExplainerError;
use xvqa::metrics::MetricError;
use xvqa::pipeline::PipelineError;
use xvqa::reasoner::ReasonerError;
use xvqa::synthworld::SynthError;
use xvqa::text::TextError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Internal,
    Usage,
    MissingFile,
    Config,
    Data,
    CheckFailed,
    Io,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Internal => 1,
            Category::Usage => 2,
            Category::MissingFile => 3,
            Category::Config => 4,
            Category::Data => 5,
            Category::CheckFailed => 6,
            Category::Io => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Internal => "internal",
            Category::Usage => "usage",
            Category::MissingFile => "missing-file",
            Category::Config => "config",
            Category::Data => "data",
            Category::CheckFailed => "check-failed",
            Category::Io => "io",
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A stage input that an earlier subcommand should have produced.
#[derive(Debug)]
pub struct MissingInput {
    pub path: PathBuf,
    pub hint: &'static str,
}

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} not found (run `xvqa {}` first)", self.path.display(), self.hint)
    }
}

impl std::error::Error for MissingInput {}

/// A numerical self-check that ran but did not pass.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn io_category(e: &io::Error) -> Category {
    if e.kind() == io::ErrorKind::NotFound {
        Category::MissingFile
    } else {
        Category::Io
    }
}

fn text(e: &TextError) -> Category {
    match e {
        TextError::Malformed(_) => Category::Data,
        TextError::MinCount | TextError::TopN => Category::Config,
    }
}

fn synth(e: &SynthError) -> Category {
    match e {
        SynthError::Config(_) => Category::Config,
        SynthError::Io(e) => io_category(e),
        SynthError::Parse { .. } => Category::Data,
        SynthError::MissingCaption { .. } => Category::Data,
        SynthError::Text(e) => text(e),
    }
}

fn checkpoint(e: &CheckpointError) -> Category {
    match e {
        CheckpointError::Io(e) => io_category(e),
        _ => Category::Data,
    }
}

fn reasoner(e: &ReasonerError) -> Category {
    match e {
        ReasonerError::Checkpoint(e) => checkpoint(e),
        ReasonerError::MalformedCandidates(_) | ReasonerError::Dimension(_) => Category::Data,
        ReasonerError::UnknownMode(_) | ReasonerError::UnknownEncoder(_) => Category::Config,
        _ => Category::Internal,
    }
}

fn analysis(e: &AnalysisError) -> Category {
    match e {
        AnalysisError::Edges(_) | AnalysisError::Threshold { .. } => Category::Config,
        AnalysisError::MissingWordProbs(_) | AnalysisError::SplitMismatch => Category::Data,
        AnalysisError::Reasoner(e) => reasoner(e),
        AnalysisError::Metric(MetricError::MalformedIdf(_)) => Category::Data,
        AnalysisError::Metric(_) => Category::Internal,
        AnalysisError::Synth(e) => synth(e),
    }
}

fn explainer(e: &ExplainerError) -> Category {
    match e {
        ExplainerError::Checkpoint(e) => checkpoint(e),
        ExplainerError::EmptyDataset | ExplainerError::Dimension(_) => Category::Data,
        ExplainerError::Kernel(_) => Category::Internal,
    }
}

fn pipeline(e: &PipelineError) -> Category {
    match e {
        PipelineError::Config(_) => Category::Config,
        PipelineError::Synth(e) => synth(e),
        PipelineError::Text(e) => text(e),
        PipelineError::Explainer(e) => explainer(e),
        PipelineError::Analysis(e) => analysis(e),
    }
}

/// The first recognisable cause in the chain decides the category.
pub fn categorize(err: &anyhow::Error) -> Category {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return Category::Config;
        }
        if cause.is::<MissingInput>() {
            return Category::MissingFile;
        }
        if cause.is::<CheckFailed>() {
            return Category::CheckFailed;
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline(e);
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return analysis(e);
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return synth(e);
        }
        if let Some(e) = cause.downcast_ref::<ExplainerError>() {
            return explainer(e);
        }
        if let Some(e) = cause.downcast_ref::<ReasonerError>() {
            return reasoner(e);
        }
        if let Some(e) = cause.downcast_ref::<CheckpointError>() {
            return checkpoint(e);
        }
        if let Some(e) = cause.downcast_ref::<TextError>() {
            return text(e);
        }
        if cause.is::<MetricError>() || cause.is::<serde_json::Error>() {
            return Category::Data;
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return io_category(e);
        }
    }
    Category::Internal
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_follow_the_cause() {
        let missing: anyhow::Error = io::Error::new(io::ErrorKind::NotFound, "x").into();
        assert_eq!(categorize(&missing), Category::MissingFile);
        let cfg: anyhow::Error = PipelineError::Synth(SynthError::Config("bad".into())).into();
        assert_eq!(categorize(&cfg), Category::Config);
        let wrapped = anyhow::Error::from(SynthError::Parse {
            line: 3,
            message: "eof".into(),
        })
        .context("reading train split");
        assert_eq!(categorize(&wrapped), Category::Data);
        let codes: Vec<u8> = [
            Category::Internal,
            Category::Usage,
            Category::MissingFile,
            Category::Config,
            Category::Data,
            Category::CheckFailed,
            Category::Io,
        ]
        .iter()
        .map(|c| c.exit_code())
        .collect();
        let mut dedup = codes.clone();
        dedup.dedup();
        assert_eq!(codes, dedup);
    }
}
