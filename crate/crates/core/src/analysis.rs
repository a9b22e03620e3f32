//! Quality binning, case classification, dataset dissection, the ablation
//! comparison and the caption-source control experiment.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    cosine, sentence_accuracy, sentence_question_relevance, vqa_accuracy, IdfTable, MetricError,
    QualityField, QualityScores,
};
use crate::reasoner::{
    predict_many, train_reasoner, AblationMode, AnswerCandidates, ReasonerConfig, ReasonerError,
    ReasonerInput, ReasonerModel, TrainingExample,
};
use crate::seed::sub_seed;
use crate::synthworld::{caption_source_select, CaptionSource, Instance, QuestionType, SynthError};
use crate::text::{question_word_vector, Vocabulary, WordList};
use crate::train::TrainLog;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("bin edges must be strictly increasing from 0 to 1, got {0:?}")]
    Edges(Vec<f64>),
    #[error("threshold {name} = {value} outside (0, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("instance {0} has no word probabilities attached")]
    MissingWordProbs(u64),
    #[error("validation splits differ between runs")]
    SplitMismatch,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub const DEFAULT_EDGES: [f64; 4] = [0.0, 0.2, 0.8, 1.0];

/// An instance with the explanations the reasoner will see.
#[derive(Clone, Debug, PartialEq)]
pub struct Explained {
    pub id: u64,
    pub question_type: QuestionType,
    pub question: Vec<String>,
    pub answers: Vec<String>,
    pub labels: Vec<f64>,
    pub references: Vec<Vec<String>>,
    pub word_probs: Vec<f64>,
    pub caption: Vec<String>,
}

impl Explained {
    /// Uses the attached word probabilities and the caption chosen by
    /// `source`.
    pub fn from_instance(
        inst: &Instance,
        source: CaptionSource,
        vocab: &Vocabulary,
    ) -> Result<Self, AnalysisError> {
        let question = inst.question_tokens();
        let caption = caption_source_select(inst, source, &question, vocab)?;
        Ok(Self {
            id: inst.id,
            question_type: inst.question_type,
            answers: inst.answers.clone(),
            labels: inst.labels(),
            references: inst.caption_tokens(),
            word_probs: inst
                .word_probs
                .clone()
                .ok_or(AnalysisError::MissingWordProbs(inst.id))?,
            caption,
            question,
        })
    }

    pub fn input(&self) -> ReasonerInput<'_> {
        ReasonerInput {
            word_probs: Some(&self.word_probs),
            caption: Some(&self.caption),
            question: &self.question,
        }
    }
}

pub fn explain_all(
    instances: &[Instance],
    source: CaptionSource,
    vocab: &Vocabulary,
) -> Result<Vec<Explained>, AnalysisError> {
    instances
        .iter()
        .map(|i| Explained::from_instance(i, source, vocab))
        .collect()
}

/// Shared lookup tables for scoring.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub word_list: &'a WordList,
    pub vocab: &'a Vocabulary,
    pub idf: &'a IdfTable,
    pub candidates: &'a AnswerCandidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: u64,
    pub predicted: String,
    pub probability: f64,
    pub accuracy: f64,
    pub quality: QualityScores,
    pub question_type: QuestionType,
}

pub fn quality_scores(item: &Explained, ctx: &EvalContext<'_>) -> Result<QualityScores, AnalysisError> {
    let q = question_word_vector(&item.question, ctx.word_list);
    Ok(QualityScores {
        word_accuracy: cosine(&item.labels, &item.word_probs)?.value.max(0.0),
        word_question_relevance: cosine(&q, &item.word_probs)?.value.max(0.0),
        sentence_accuracy: sentence_accuracy(&item.caption, &item.references, ctx.idf).clamp(0.0, 1.0),
        sentence_question_relevance: sentence_question_relevance(&item.caption, &item.question, ctx.vocab)
            .value,
    })
}

/// Predicts every item and scores both the answer and its explanations.
pub fn evaluate(
    model: &ReasonerModel,
    items: &[Explained],
    ctx: &EvalContext<'_>,
) -> Result<Vec<ResultRecord>, AnalysisError> {
    let inputs: Vec<ReasonerInput<'_>> = items.iter().map(Explained::input).collect();
    let predictions = predict_many(model, ctx.candidates, &inputs)?;
    items
        .par_iter()
        .zip(predictions)
        .map(|(item, (predicted, probability))| {
            Ok(ResultRecord {
                id: item.id,
                accuracy: vqa_accuracy(&predicted, &item.answers)?,
                quality: quality_scores(item, ctx)?,
                question_type: item.question_type,
                predicted,
                probability,
            })
        })
        .collect()
}

pub fn train_on(
    items: &[Explained],
    ctx: &EvalContext<'_>,
    config: &ReasonerConfig,
    seed: u64,
) -> Result<(ReasonerModel, TrainLog), AnalysisError> {
    let examples: Vec<TrainingExample<'_>> = items
        .iter()
        .map(|i| TrainingExample {
            input: i.input(),
            answers: &i.answers,
        })
        .collect();
    Ok(train_reasoner(
        &examples,
        ctx.candidates,
        ctx.vocab.clone(),
        ctx.word_list.len(),
        config,
        seed,
    )?)
}

fn validate_edges(edges: &[f64]) -> Result<(), AnalysisError> {
    let ok = edges.len() >= 2
        && edges[0] == 0.0
        && edges[edges.len() - 1] == 1.0
        && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(AnalysisError::Edges(edges.to_vec()))
    }
}

/// Index of the bin holding `x`; the last bin is closed at 1.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let last = edges.len() - 2;
    (0..last).find(|&i| x < edges[i + 1]).unwrap_or(last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean VQA accuracy in percent; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

impl BinRow {
    pub fn label(&self, last: bool) -> String {
        let close = if last { ']' } else { ')' };
        format!("[{:.1}, {:.1}{close}", self.lower, self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub field: QualityField,
    pub rows: Vec<BinRow>,
}

pub fn bin_by_quality(
    results: &[ResultRecord],
    field: QualityField,
    edges: &[f64],
) -> Result<BinTable, AnalysisError> {
    validate_edges(edges)?;
    if results.is_empty() {
        return Ok(BinTable { field, rows: Vec::new() });
    }
    let n = edges.len() - 1;
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for r in results {
        let i = bin_index(edges, r.quality.get(field));
        sums[i] += r.accuracy;
        counts[i] += 1;
    }
    let rows = (0..n)
        .map(|i| BinRow {
            lower: edges[i],
            upper: edges[i + 1],
            count: counts[i],
            accuracy: (counts[i] > 0).then(|| 100.0 * sums[i] / counts[i] as f64),
        })
        .collect();
    Ok(BinTable { field, rows })
}

impl BinTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// True when accuracy never drops between consecutive non-empty bins.
    pub fn is_non_decreasing(&self) -> bool {
        let acc: Vec<f64> = self.rows.iter().filter_map(|r| r.accuracy).collect();
        acc.windows(2).all(|w| w[1] >= w[0])
    }

    /// Top-bin minus bottom-bin accuracy in points, if both are populated.
    pub fn gap(&self) -> Option<f64> {
        Some(self.rows.last()?.accuracy? - self.rows.first()?.accuracy?)
    }

    /// Least-squares slope of bin accuracy against bin midpoint, in points
    /// per unit of quality.
    pub fn slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.accuracy.map(|a| ((r.lower + r.upper) / 2.0, a)))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<14}{:>8}{:>12}\n", self.field.label(), "count", "acc (%)");
        let last = self.rows.len().saturating_sub(1);
        for (i, r) in self.rows.iter().enumerate() {
            let acc = r.accuracy.map_or("-".to_owned(), |a| format!("{a:.2}"));
            let _ = writeln!(s, "{:<14}{:>8}{:>12}", r.label(i == last), r.count, acc);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("field,lower,upper,count,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map_or(String::new(), |a| format!("{a:.4}"));
            let _ = writeln!(s, "{},{},{},{},{acc}", self.field.key(), r.lower, r.upper, r.count);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Relevance at or above this is "high".
    pub relevance: f64,
    /// VQA accuracy at or above this counts as correct.
    pub correctness: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            relevance: 0.2,
            correctness: 1.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (name, value) in [("relevance", self.relevance), ("correctness", self.correctness)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(AnalysisError::Threshold { name, value });
            }
        }
        Ok(())
    }
}

/// Which relevance score decides the band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceSource {
    Word,
    Sentence,
    Max,
}

impl RelevanceSource {
    pub fn for_mode(mode: AblationMode) -> Self {
        match mode {
            AblationMode::Word => RelevanceSource::Word,
            AblationMode::Sentence => RelevanceSource::Sentence,
            AblationMode::Full => RelevanceSource::Max,
        }
    }

    pub fn score(self, q: &QualityScores) -> f64 {
        match self {
            RelevanceSource::Word => q.word_question_relevance,
            RelevanceSource::Sentence => q.sentence_question_relevance,
            RelevanceSource::Max => q.word_question_relevance.max(q.sentence_question_relevance),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseType {
    /// High relevance, correct.
    Reliable = 1,
    /// Low relevance, wrong.
    Missed = 2,
    /// High relevance, wrong.
    Misreasoned = 3,
    /// Low relevance, correct.
    Guessed = 4,
}

impl CaseType {
    pub fn from_parts(band: Band, correct: bool) -> Self {
        match (band, correct) {
            (Band::High, true) => CaseType::Reliable,
            (Band::Low, false) => CaseType::Missed,
            (Band::High, false) => CaseType::Misreasoned,
            (Band::Low, true) => CaseType::Guessed,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: u64,
    pub band: Band,
    pub correct: bool,
    pub case_type: CaseType,
    pub question_type: QuestionType,
}

pub fn classify_case(
    record: &ResultRecord,
    source: RelevanceSource,
    thresholds: &Thresholds,
) -> CaseRecord {
    let band = if source.score(&record.quality) >= thresholds.relevance {
        Band::High
    } else {
        Band::Low
    };
    let correct = record.accuracy >= thresholds.correctness;
    CaseRecord {
        id: record.id,
        band,
        correct,
        case_type: CaseType::from_parts(band, correct),
        question_type: record.question_type,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissectNode {
    pub label: String,
    pub count: usize,
    /// Share of the parent node in percent (100 at the root).
    pub percent: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<DissectNode>,
}

impl DissectNode {
    fn new(label: &str, count: usize, parent: usize) -> Self {
        let percent = if parent == 0 {
            0.0
        } else {
            100.0 * count as f64 / parent as f64
        };
        Self {
            label: label.to_owned(),
            count,
            percent,
            children: Vec::new(),
        }
    }

    pub fn child(&self, label: &str) -> Option<&DissectNode> {
        self.children.iter().find(|c| c.label == label)
    }

    /// Follows a path of labels from this node.
    pub fn path(&self, labels: &[&str]) -> Option<&DissectNode> {
        labels.iter().try_fold(self, |n, l| n.child(l))
    }

    /// Children counts sum to the parent's at every inner node.
    pub fn is_partition(&self) -> bool {
        self.children.is_empty()
            || (self.children.iter().map(|c| c.count).sum::<usize>() == self.count
                && self.children.iter().all(DissectNode::is_partition))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s, 0);
        s
    }

    fn write_text(&self, s: &mut String, depth: usize) {
        let _ = writeln!(
            s,
            "{}{} {} ({:.1}%)",
            "  ".repeat(depth),
            self.label,
            self.count,
            self.percent
        );
        for c in &self.children {
            c.write_text(s, depth + 1);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dissection {
    pub relevance_source: RelevanceSource,
    pub thresholds: Thresholds,
    pub root: DissectNode,
}

impl Dissection {
    pub fn to_text(&self) -> String {
        format!(
            "relevance threshold {} ({:?}), correct when accuracy >= {:.3}\n{}",
            self.thresholds.relevance,
            self.relevance_source,
            self.thresholds.correctness,
            self.root.to_text()
        )
    }
}

/// QA splits into CA/WA by correctness, each into GA (guessed, low
/// relevance) and RA (reliable), each into Y/N and O by answer type.
pub fn dissect(results: &[ResultRecord], source: RelevanceSource, thresholds: &Thresholds) -> Dissection {
    let cases: Vec<CaseRecord> = results.iter().map(|r| classify_case(r, source, thresholds)).collect();
    let mut root = DissectNode::new("QA", cases.len(), cases.len());
    for (label, correct) in [("CA", true), ("WA", false)] {
        let a: Vec<&CaseRecord> = cases.iter().filter(|c| c.correct == correct).collect();
        let mut na = DissectNode::new(label, a.len(), cases.len());
        for (label, band) in [("GA", Band::Low), ("RA", Band::High)] {
            let b: Vec<&&CaseRecord> = a.iter().filter(|c| c.band == band).collect();
            let mut nb = DissectNode::new(label, b.len(), a.len());
            let yn = b.iter().filter(|c| c.question_type == QuestionType::YesNo).count();
            nb.children.push(DissectNode::new("Y/N", yn, b.len()));
            nb.children.push(DissectNode::new("O", b.len() - yn, b.len()));
            na.children.push(nb);
        }
        root.children.push(na);
    }
    Dissection {
        relevance_source: source,
        thresholds: *thresholds,
        root,
    }
}

/// Mean accuracy in percent overall and per answer type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub label: String,
    pub count: usize,
    pub all: f64,
    pub yes_no: f64,
    pub number: f64,
    pub other: f64,
}

impl AccuracyRow {
    pub fn from_records(label: &str, records: &[ResultRecord]) -> Self {
        let mean = |f: &dyn Fn(&ResultRecord) -> bool| {
            let xs: Vec<f64> = records.iter().filter(|r| f(r)).map(|r| r.accuracy).collect();
            if xs.is_empty() {
                0.0
            } else {
                100.0 * xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let of = |t: QuestionType| move |r: &ResultRecord| r.question_type == t;
        Self {
            label: label.to_owned(),
            count: records.len(),
            all: mean(&|_| true),
            yes_no: mean(&of(QuestionType::YesNo)),
            number: mean(&of(QuestionType::Number)),
            other: mean(&of(QuestionType::Other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub title: String,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn row(&self, label: &str) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(self.title.len());
        let mut s = format!(
            "{:<w$}{:>9}{:>9}{:>9}{:>9}\n",
            self.title, "All", "Y/N", "Num", "Others"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<w$}{:>9.2}{:>9.2}{:>9.2}{:>9.2}",
                r.label, r.all, r.yes_no, r.number, r.other
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,count,all,yes_no,number,other\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4},{:.4}",
                r.label, r.count, r.all, r.yes_no, r.number, r.other
            );
        }
        s
    }
}

pub fn ablation_label(mode: AblationMode) -> &'static str {
    match mode {
        AblationMode::Word => "Word-based VQA",
        AblationMode::Sentence => "Sentence-based VQA",
        AblationMode::Full => "Full VQA",
    }
}

#[derive(Clone, Debug)]
pub struct ModeRun {
    pub mode: AblationMode,
    pub model: ReasonerModel,
    pub log: TrainLog,
    pub records: Vec<ResultRecord>,
}

#[derive(Clone, Debug)]
pub struct Ablation {
    pub runs: Vec<ModeRun>,
    pub table: AccuracyTable,
}

impl Ablation {
    pub fn run(&self, mode: AblationMode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Trains one reasoner per mode, identical except for the mode and all
/// seeded with `seed`, then evaluates each on the same validation items.
pub fn run_ablation(
    train: &[Explained],
    val: &[Explained],
    ctx: &EvalContext<'_>,
    base: &ReasonerConfig,
    seed: u64,
) -> Result<Ablation, AnalysisError> {
    let mut runs = Vec::new();
    for mode in AblationMode::ALL {
        let cfg = ReasonerConfig { mode, ..*base };
        let (model, log) = train_on(train, ctx, &cfg, seed)?;
        let records = evaluate(&model, val, ctx)?;
        runs.push(ModeRun {
            mode,
            model,
            log,
            records,
        });
    }
    let ids: Vec<u64> = runs[0].records.iter().map(|r| r.id).collect();
    if runs.iter().any(|r| r.records.iter().map(|x| x.id).ne(ids.iter().copied())) {
        return Err(AnalysisError::SplitMismatch);
    }
    let table = AccuracyTable {
        title: "Model".into(),
        rows: runs
            .iter()
            .map(|r| AccuracyRow::from_records(ablation_label(r.mode), &r.records))
            .collect(),
    };
    Ok(Ablation { runs, table })
}

#[derive(Clone, Debug)]
pub struct Control {
    pub records: Vec<(CaptionSource, Vec<ResultRecord>)>,
    pub table: AccuracyTable,
}

/// Evaluates one sentence-mode model with each caption source.
pub fn control_experiment(
    val: &[Instance],
    model: &ReasonerModel,
    ctx: &EvalContext<'_>,
) -> Result<Control, AnalysisError> {
    let mut records = Vec::new();
    for source in CaptionSource::ALL {
        let items = explain_all(val, source, ctx.vocab)?;
        records.push((source, evaluate(model, &items, ctx)?));
    }
    let table = AccuracyTable {
        title: "Caption source".into(),
        rows: records
            .iter()
            .map(|(s, r)| AccuracyRow::from_records(s.label(), r))
            .collect(),
    };
    Ok(Control { records, table })
}

/// Explanation knob varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    DetectorNoise,
    CaptionCorruption,
    RelevanceDrop,
}

impl Knob {
    pub const ALL: [Knob; 3] = [Knob::DetectorNoise, Knob::CaptionCorruption, Knob::RelevanceDrop];

    pub fn fields(self) -> &'static [QualityField] {
        match self {
            Knob::DetectorNoise => &[QualityField::WordAccuracy, QualityField::WordQuestionRelevance],
            Knob::CaptionCorruption => &[
                QualityField::SentenceAccuracy,
                QualityField::SentenceQuestionRelevance,
            ],
            Knob::RelevanceDrop => &QualityField::ALL,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Knob::DetectorNoise => "detector_noise",
            Knob::CaptionCorruption => "caption_corruption",
            Knob::RelevanceDrop => "relevance_drop",
        }
    }

    /// Seed label for the randomness of one level.
    pub fn level_seed(self, seed: u64, level: f64) -> u64 {
        sub_seed(seed, &format!("sweep/{}/{level}", self.key()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnobReport {
    pub knob: Knob,
    pub mode: AblationMode,
    pub levels: Vec<LevelSummary>,
    /// Binned over the records of all levels pooled.
    pub tables: Vec<BinTable>,
}

impl KnobReport {
    pub fn table(&self, field: QualityField) -> Option<&BinTable> {
        self.tables.iter().find(|t| t.field == field)
    }

    pub fn all_non_decreasing(&self) -> bool {
        self.tables.iter().all(BinTable::is_non_decreasing)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("knob {} (model: {})\n", self.knob.key(), self.mode);
        for l in &self.levels {
            let _ = writeln!(s, "  level {:<6} n={:<6} acc {:.2}%", l.level, l.count, l.accuracy);
        }
        for t in &self.tables {
            s.push_str(&t.to_text());
            let slope = t.slope().map_or("-".to_owned(), |x| format!("{x:.2}"));
            let _ = writeln!(
                s,
                "non-decreasing: {}  slope: {slope}\n",
                if t.is_non_decreasing() { "yes" } else { "no" }
            );
        }
        s
    }
}

/// Evaluates each level through `level_records`, then bins the pooled
/// records by the knob's quality fields.
pub fn sweep_knob<F>(
    knob: Knob,
    mode: AblationMode,
    levels: &[f64],
    edges: &[f64],
    mut level_records: F,
) -> Result<KnobReport, AnalysisError>
where
    F: FnMut(f64) -> Result<Vec<ResultRecord>, AnalysisError>,
{
    validate_edges(edges)?;
    let mut pooled = Vec::new();
    let mut summaries = Vec::new();
    for &level in levels {
        let recs = level_records(level)?;
        summaries.push(LevelSummary {
            level,
            count: recs.len(),
            accuracy: AccuracyRow::from_records("", &recs).all,
        });
        pooled.extend(recs);
    }
    let tables = knob
        .fields()
        .iter()
        .map(|&f| bin_by_quality(&pooled, f, edges))
        .collect::<Result<_, _>>()?;
    Ok(KnobReport {
        knob,
        mode,
        levels: summaries,
        tables,
    })
}

pub fn records_to_csv(records: &[ResultRecord]) -> String {
    let mut s = String::from(
        "id,question_type,predicted,probability,accuracy,word_accuracy,word_question_relevance,sentence_accuracy,sentence_question_relevance\n",
    );
    for r in records {
        let q = &r.quality;
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.id,
            r.question_type.label(),
            r.predicted,
            r.probability,
            r.accuracy,
            q.word_accuracy,
            q.word_question_relevance,
            q.sentence_accuracy,
            q.sentence_question_relevance
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, score: f64, accuracy: f64, question_type: QuestionType) -> ResultRecord {
        ResultRecord {
            id,
            predicted: "yes".into(),
            probability: 0.5,
            accuracy,
            quality: QualityScores {
                word_accuracy: score,
                word_question_relevance: score,
                sentence_accuracy: score,
                sentence_question_relevance: score,
            },
            question_type,
        }
    }

    #[test]
    fn binning_example() {
        let rs = [
            rec(0, 0.1, 0.0, QuestionType::YesNo),
            rec(1, 0.5, 1.0, QuestionType::YesNo),
            rec(2, 0.9, 1.0, QuestionType::YesNo),
        ];
        let t = bin_by_quality(&rs, QualityField::WordAccuracy, &DEFAULT_EDGES).unwrap();
        let acc: Vec<Option<f64>> = t.rows.iter().map(|r| r.accuracy).collect();
        assert_eq!(acc, [Some(0.0), Some(100.0), Some(100.0)]);
        assert!(t.is_non_decreasing());
        assert_eq!(t.gap(), Some(100.0));
        assert!(t.to_text().contains("[0.8, 1.0]"));
        assert!(t.to_csv().starts_with("field,lower,upper,count,accuracy\n"));
    }

    #[test]
    fn exact_one_lands_in_last_bin() {
        let rs: Vec<ResultRecord> = (0..5).map(|i| rec(i, 1.0, 1.0, QuestionType::Other)).collect();
        let t = bin_by_quality(&rs, QualityField::SentenceAccuracy, &DEFAULT_EDGES).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.count).collect::<Vec<_>>(), [0, 0, 5]);
        assert!(bin_by_quality(&[], QualityField::SentenceAccuracy, &DEFAULT_EDGES)
            .unwrap()
            .rows
            .is_empty());
    }

    #[test]
    fn bad_edges_rejected() {
        for e in [&[0.0, 0.5][..], &[0.0, 0.5, 0.5, 1.0], &[0.1, 1.0], &[0.0]] {
            assert!(bin_by_quality(&[], QualityField::WordAccuracy, e).is_err());
        }
    }

    #[test]
    fn case_types() {
        let th = Thresholds::default();
        let cases = [
            (0.85, 1.0, CaseType::Reliable),
            (0.05, 0.0, CaseType::Missed),
            (0.85, 1.0 / 3.0, CaseType::Misreasoned),
            (0.05, 1.0, CaseType::Guessed),
        ];
        for (score, acc, expected) in cases {
            let c = classify_case(&rec(0, score, acc, QuestionType::YesNo), RelevanceSource::Max, &th);
            assert_eq!(c.case_type, expected);
        }
        assert_eq!(CaseType::Missed.number(), 2);
        let lenient = Thresholds {
            correctness: 2.0 / 3.0,
            ..th
        };
        let c = classify_case(&rec(0, 0.9, 2.0 / 3.0, QuestionType::YesNo), RelevanceSource::Word, &lenient);
        assert_eq!(c.case_type, CaseType::Reliable);
        assert!(Thresholds { relevance: 0.0, ..th }.validate().is_err());
    }

    #[test]
    fn relevance_source_per_mode() {
        let mut r = rec(0, 0.0, 1.0, QuestionType::Number);
        r.quality.word_question_relevance = 0.1;
        r.quality.sentence_question_relevance = 0.3;
        assert_eq!(RelevanceSource::for_mode(AblationMode::Full).score(&r.quality), 0.3);
        assert_eq!(RelevanceSource::for_mode(AblationMode::Word).score(&r.quality), 0.1);
        assert_eq!(RelevanceSource::for_mode(AblationMode::Sentence).score(&r.quality), 0.3);
    }

    #[test]
    fn dissection_tree_shape() {
        let rs = [
            rec(0, 0.9, 1.0, QuestionType::YesNo),
            rec(1, 0.1, 1.0, QuestionType::YesNo),
            rec(2, 0.1, 1.0, QuestionType::Other),
            rec(3, 0.1, 0.0, QuestionType::Number),
        ];
        let d = dissect(&rs, RelevanceSource::Max, &Thresholds::default());
        assert!(d.root.is_partition());
        assert_eq!(d.root.count, 4);
        assert_eq!(d.root.path(&["CA"]).unwrap().count, 3);
        let ga = d.root.path(&["CA", "GA"]).unwrap();
        assert_eq!(ga.count, 2);
        assert!((ga.percent - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.root.path(&["CA", "GA", "Y/N"]).unwrap().count, 1);
        assert_eq!(d.root.path(&["WA", "GA", "O"]).unwrap().count, 1);
        assert_eq!(d.root.path(&["WA", "RA"]).unwrap().count, 0);
        let text = d.to_text();
        assert!(text.starts_with("relevance threshold 0.2"));
        let json = serde_json::to_string(&d).unwrap();
        let back: Dissection = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn accuracy_rows() {
        let rs = [
            rec(0, 0.9, 1.0, QuestionType::YesNo),
            rec(1, 0.1, 0.0, QuestionType::YesNo),
            rec(2, 0.1, 1.0 / 3.0, QuestionType::Number),
        ];
        let row = AccuracyRow::from_records("x", &rs);
        assert!((row.all - 100.0 * (4.0 / 3.0) / 3.0).abs() < 1e-9);
        assert_eq!(row.yes_no, 50.0);
        assert_eq!(row.other, 0.0);
        let t = AccuracyTable {
            title: "Model".into(),
            rows: vec![row],
        };
        assert!(t.to_text().contains("Y/N"));
        assert_eq!(t.to_csv().lines().count(), 2);
    }

    #[test]
    fn sweep_pools_levels() {
        let report = sweep_knob(Knob::DetectorNoise, AblationMode::Word, &[0.0, 1.0], &DEFAULT_EDGES, |l| {
            Ok(vec![rec(0, 1.0 - l, 1.0 - l, QuestionType::YesNo)])
        })
        .unwrap();
        assert_eq!(report.levels[0].accuracy, 100.0);
        assert_eq!(report.levels[1].accuracy, 0.0);
        assert_eq!(report.tables.len(), 2);
        assert_eq!(report.tables[0].total(), 2);
        assert!(report.all_non_decreasing());
    }
}
