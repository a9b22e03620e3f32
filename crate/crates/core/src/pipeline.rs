//! End-to-end orchestration: data, vocabularies, explainers, reasoners and
//! the experiments built on them. Every stochastic stage draws from its own
//! labelled sub-seed of the global seed.

use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, control_experiment, evaluate, explain_all, run_ablation, sweep_knob, Ablation,
    AnalysisError, Control, EvalContext, Explained, KnobReport, Knob, Thresholds, DEFAULT_EDGES,
};
use crate::explainers::{
    train_caption_generator, train_word_predictor, CaptionGenerator, CaptionerConfig,
    ExplainerError, WordPredictor, WordPredictorConfig,
};
use crate::metrics::IdfTable;
use crate::reasoner::{
    build_answer_candidates, AblationMode, AnswerCandidates, ReasonerConfig, ReasonerModel,
};
use crate::seed::sub_seed;
use crate::synthworld::{
    corrupt_caption, generate_dataset, generate_val_split, perturb_word_probs, CaptionSource,
    GenConfig, Instance, SynthError,
};
use crate::text::{build_vocabulary, StopWords, TextError, Vocabulary, WordList};
use crate::train::TrainLog;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Explainer(#[from] ExplainerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl From<crate::reasoner::ReasonerError> for PipelineError {
    fn from(e: crate::reasoner::ReasonerError) -> Self {
        PipelineError::Analysis(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    /// Tokens seen fewer times in the training questions and captions map
    /// to `#unk`.
    pub vocab_min_count: usize,
    pub answer_candidates: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            vocab_min_count: 1,
            answer_candidates: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub thresholds: Thresholds,
    pub bins: Vec<f64>,
    /// Caption the reasoners are trained and evaluated with.
    pub caption_source: CaptionSource,
    pub noise_levels: Vec<f64>,
    pub corruption_levels: Vec<f64>,
    pub relevance_drop_levels: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let grid = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        Self {
            thresholds: Thresholds::default(),
            bins: DEFAULT_EDGES.to_vec(),
            caption_source: CaptionSource::Generated,
            noise_levels: grid.clone(),
            corruption_levels: grid,
            relevance_drop_levels: vec![0.0, 0.3, 0.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Run directory; every output goes under it.
    pub out: PathBuf,
    /// Optional directory holding instance files from an earlier run.
    pub input: Option<PathBuf>,
    pub data: GenConfig,
    pub text: TextConfig,
    pub word_predictor: WordPredictorConfig,
    pub captioner: CaptionerConfig,
    pub reasoner: ReasonerConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs/default"),
            input: None,
            data: GenConfig::default(),
            text: TextConfig::default(),
            word_predictor: WordPredictorConfig::default(),
            captioner: CaptionerConfig::default(),
            reasoner: ReasonerConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    /// Copies the global seed into the generator config and checks every
    /// section.
    pub fn resolve(mut self) -> Result<Self, PipelineError> {
        self.data.seed = self.seed;
        self.data.validate()?;
        self.analysis.thresholds.validate()?;
        let e = &self.analysis.bins;
        if e.len() < 2 || e[0] != 0.0 || e[e.len() - 1] != 1.0 || e.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalysisError::Edges(e.clone()).into());
        }
        let a = &self.analysis;
        for (name, grid) in [
            ("noise_levels", &a.noise_levels),
            ("corruption_levels", &a.corruption_levels),
            ("relevance_drop_levels", &a.relevance_drop_levels),
        ] {
            if grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(PipelineError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.reasoner.dropout) {
            return Err(PipelineError::Config("reasoner.dropout must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("text.vocab_min_count", self.text.vocab_min_count),
            ("text.answer_candidates", self.text.answer_candidates),
            ("reasoner.batch_size", self.reasoner.batch_size),
            ("reasoner.embed", self.reasoner.embed),
            ("reasoner.hidden", self.reasoner.hidden),
            ("captioner.batch_size", self.captioner.batch_size),
            ("captioner.hidden", self.captioner.hidden),
            ("word_predictor.batch_size", self.word_predictor.batch_size),
            ("word_predictor.hidden", self.word_predictor.hidden),
        ] {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        Ok(self)
    }

    pub fn component_seed(&self, label: &str) -> u64 {
        sub_seed(self.seed, label)
    }
}

/// Splits plus everything derived from the training split alone.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub word_list: WordList,
    pub vocab: Vocabulary,
    pub candidates: AnswerCandidates,
    pub idf: IdfTable,
}

impl Prepared {
    pub fn from_splits(
        train: Vec<Instance>,
        val: Vec<Instance>,
        word_list: WordList,
        text: &TextConfig,
    ) -> Result<Self, PipelineError> {
        if train.is_empty() {
            return Err(PipelineError::Config("training split is empty".into()));
        }
        let corpus: Vec<Vec<String>> = train
            .iter()
            .flat_map(|i| std::iter::once(i.question_tokens()).chain(i.caption_tokens()))
            .collect();
        let vocab = build_vocabulary(&corpus, text.vocab_min_count)?;
        let candidates = build_answer_candidates(
            train.iter().flat_map(|i| i.answers.iter()),
            text.answer_candidates,
        );
        let idf = IdfTable::from_references(&train.iter().map(Instance::caption_tokens).collect::<Vec<_>>());
        Ok(Self {
            train,
            val,
            word_list,
            vocab,
            candidates,
            idf,
        })
    }

    pub fn generate(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let d = generate_dataset(&cfg.data)?;
        Self::from_splits(d.train, d.val, d.word_list, &cfg.text)
    }

    pub fn context(&self) -> EvalContext<'_> {
        EvalContext {
            word_list: &self.word_list,
            vocab: &self.vocab,
            idf: &self.idf,
            candidates: &self.candidates,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Explainers {
    pub words: WordPredictor,
    pub captioner: CaptionGenerator,
    pub word_log: TrainLog,
    pub caption_log: TrainLog,
}

pub fn train_explainers(prep: &Prepared, cfg: &RunConfig) -> Result<Explainers, PipelineError> {
    let xs: Vec<Vec<f64>> = prep.train.iter().map(|i| i.scene_features.clone()).collect();
    let ys: Vec<Vec<f64>> = prep.train.iter().map(Instance::labels).collect();
    if xs.iter().any(Vec::is_empty) {
        return Err(PipelineError::Config(
            "instances carry no scene features; explainer stages are disabled".into(),
        ));
    }
    let (words, word_log) =
        train_word_predictor(&xs, &ys, &cfg.word_predictor, cfg.component_seed("word-predictor"))?;
    let caps: Vec<Vec<String>> = prep.train.iter().map(|i| i.caption_tokens().into_iter().next().unwrap_or_default()).collect();
    let all: Vec<Vec<Vec<String>>> = prep.train.iter().map(Instance::caption_tokens).collect();
    let mut pairs: Vec<(&[f64], &[String])> = Vec::new();
    for (k, inst) in prep.train.iter().enumerate() {
        if cfg.captioner.all_references {
            for c in &all[k] {
                pairs.push((&inst.scene_features, c));
            }
        } else {
            pairs.push((&inst.scene_features, &caps[k]));
        }
    }
    let (captioner, caption_log) = train_caption_generator(
        &pairs,
        prep.vocab.clone(),
        &cfg.captioner,
        cfg.component_seed("captioner"),
    )?;
    Ok(Explainers {
        words,
        captioner,
        word_log,
        caption_log,
    })
}

/// Fills `word_probs` and `generated_caption` of every instance.
pub fn attach_explanations(
    instances: &mut [Instance],
    ex: &Explainers,
    cfg: &RunConfig,
) -> Result<(), PipelineError> {
    instances.par_iter_mut().try_for_each(|inst| -> Result<(), PipelineError> {
        inst.word_probs = Some(ex.words.predict(&inst.scene_features)?);
        let c = ex
            .captioner
            .generate(&inst.scene_features, cfg.captioner.max_len, cfg.captioner.decode)?;
        inst.generated_caption = Some(c.join(" "));
        Ok(())
    })
}

pub fn train_reasoner_mode(
    prep: &Prepared,
    cfg: &RunConfig,
    mode: AblationMode,
) -> Result<(ReasonerModel, TrainLog), PipelineError> {
    let items = explain_all(&prep.train, cfg.analysis.caption_source, &prep.vocab)?;
    let rc = ReasonerConfig { mode, ..cfg.reasoner };
    Ok(analysis::train_on(&items, &prep.context(), &rc, cfg.component_seed("reasoner"))?)
}

pub fn ablation(prep: &Prepared, cfg: &RunConfig) -> Result<Ablation, PipelineError> {
    let train = explain_all(&prep.train, cfg.analysis.caption_source, &prep.vocab)?;
    let val = explain_all(&prep.val, cfg.analysis.caption_source, &prep.vocab)?;
    Ok(run_ablation(
        &train,
        &val,
        &prep.context(),
        &cfg.reasoner,
        cfg.component_seed("reasoner"),
    )?)
}

pub fn control(prep: &Prepared, sentence_model: &ReasonerModel) -> Result<Control, PipelineError> {
    Ok(control_experiment(&prep.val, sentence_model, &prep.context())?)
}

/// Models used by the sweep, one per knob.
pub struct SweepModels<'a> {
    pub word: &'a ReasonerModel,
    pub sentence: &'a ReasonerModel,
    pub full: &'a ReasonerModel,
}

/// Detector noise perturbs the predicted word probabilities and feeds the
/// word model; caption corruption degrades the most relevant reference and feeds
/// the sentence model; relevance drop regenerates the validation split and
/// feeds the full model through the trained explainers.
pub fn quality_sweep(
    prep: &Prepared,
    cfg: &RunConfig,
    ex: &Explainers,
    models: &SweepModels<'_>,
) -> Result<Vec<KnobReport>, PipelineError> {
    let ctx = prep.context();
    let edges = &cfg.analysis.bins;
    let base = explain_all(&prep.val, CaptionSource::RelevantGroundTruth, &prep.vocab)?;

    let noise = sweep_knob(
        Knob::DetectorNoise,
        AblationMode::Word,
        &cfg.analysis.noise_levels,
        edges,
        |level| {
            let mut rng = ChaCha8Rng::seed_from_u64(Knob::DetectorNoise.level_seed(cfg.seed, level));
            let items: Vec<Explained> = base
                .iter()
                .map(|i| Explained {
                    word_probs: perturb_word_probs(&i.word_probs, level, &mut rng),
                    ..i.clone()
                })
                .collect();
            evaluate(models.word, &items, &ctx)
        },
    )?;

    let stops = StopWords::default();
    let corruption = sweep_knob(
        Knob::CaptionCorruption,
        AblationMode::Sentence,
        &cfg.analysis.corruption_levels,
        edges,
        |level| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(Knob::CaptionCorruption.level_seed(cfg.seed, level));
            let items: Vec<Explained> = base
                .iter()
                .map(|i| Explained {
                    caption: corrupt_caption(&i.caption, level, &mut rng, &prep.vocab, &stops),
                    ..i.clone()
                })
                .collect();
            evaluate(models.sentence, &items, &ctx)
        },
    )?;

    let drop = sweep_knob(
        Knob::RelevanceDrop,
        AblationMode::Full,
        &cfg.analysis.relevance_drop_levels,
        edges,
        |level| {
            let gen = GenConfig {
                relevance_drop: level,
                ..cfg.data.clone()
            };
            let (mut val, _) = generate_val_split(&gen, &prep.word_list)?;
            attach_explanations(&mut val, ex, cfg)
                .map_err(|e| AnalysisError::Synth(SynthError::Config(e.to_string())))?;
            let items = explain_all(&val, cfg.analysis.caption_source, &prep.vocab)?;
            evaluate(models.full, &items, &ctx)
        },
    )?;
    Ok(vec![noise, corruption, drop])
}

/// Everything a full run produces in memory.
pub struct FullRun {
    pub prepared: Prepared,
    pub explainers: Explainers,
    pub ablation: Ablation,
}

/// Generates data, trains explainers, attaches explanations to both splits
/// and runs the ablation.
pub fn full_run(cfg: &RunConfig) -> Result<FullRun, PipelineError> {
    let mut prep = Prepared::generate(cfg)?;
    let ex = train_explainers(&prep, cfg)?;
    attach_explanations(&mut prep.train, &ex, cfg)?;
    attach_explanations(&mut prep.val, &ex, cfg)?;
    let ablation = ablation(&prep, cfg)?;
    Ok(FullRun {
        prepared: prep,
        explainers: ex,
        ablation,
    })
}

impl FullRun {
    pub fn model(&self, mode: AblationMode) -> &ReasonerModel {
        &self.ablation.run(mode).expect("every mode is trained").model
    }

    pub fn sweep_models(&self) -> SweepModels<'_> {
        SweepModels {
            word: self.model(AblationMode::Word),
            sentence: self.model(AblationMode::Sentence),
            full: self.model(AblationMode::Full),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_copies_seed_and_validates() {
        let cfg = RunConfig {
            seed: 99,
            ..RunConfig::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.data.seed, 99);
        let bad = RunConfig {
            analysis: AnalysisConfig {
                bins: vec![0.0, 0.5],
                ..AnalysisConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(bad.resolve().is_err());
        let bad = RunConfig {
            data: GenConfig {
                yes_bias: 0.2,
                ..GenConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(matches!(bad.resolve(), Err(PipelineError::Synth(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
    }
}
