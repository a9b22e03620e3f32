//! Config resolution: defaults, then a TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use xvqa::pipeline::RunConfig;
use xvqa::reasoner::AblationMode;
use xvqa::synthworld::CaptionSource;

use crate::errors::ConfigError;

/// Overrides the root that relative `--out` directories resolve against.
pub const OUT_ROOT_ENV: &str = "XVQA_OUT_ROOT";

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Word,
    Sentence,
    Full,
}

impl From<ModeArg> for AblationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Word => AblationMode::Word,
            ModeArg::Sentence => AblationMode::Sentence,
            ModeArg::Full => AblationMode::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SourceArg {
    Null,
    Generated,
    Gt,
}

impl From<SourceArg> for CaptionSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Null => CaptionSource::Null,
            SourceArg::Generated => CaptionSource::Generated,
            SourceArg::Gt => CaptionSource::RelevantGroundTruth,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML file with any subset of the run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed; every stochastic stage derives its own sub-seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Reasoner ablation mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Caption fed to the reasoner.
    #[arg(long, value_enum)]
    pub caption_source: Option<SourceArg>,
    /// Relevance at or above this counts as high in the dissection.
    #[arg(long, value_name = "F")]
    pub relevance_threshold: Option<f64>,
    /// Comma-separated bin edges from 0 to 1, e.g. 0,0.2,0.8,1.
    #[arg(long, value_name = "EDGES")]
    pub bins: Option<String>,
}

fn parse_edges(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("bad bin edge {t:?} in --bins")))
        })
        .collect()
}

pub fn load_file(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text)
        .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.message())).into())
}

/// Defaults < config file < flags, then validated.
pub fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(m) = common.mode {
        cfg.reasoner.mode = m.into();
    }
    if let Some(s) = common.caption_source {
        cfg.analysis.caption_source = s.into();
    }
    if let Some(t) = common.relevance_threshold {
        cfg.analysis.thresholds.relevance = t;
    }
    if let Some(b) = &common.bins {
        cfg.analysis.bins = parse_edges(b)?;
    }
    Ok(cfg.resolve()?)
}

/// Run directory for `cfg`, honouring the output-root override for
/// relative paths.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if cfg.out.is_relative() && !root.is_empty() => PathBuf::from(root).join(&cfg.out),
        _ => cfg.out.clone(),
    }
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).context("serializing the resolved config")
}
