//! Deterministic synthetic micro-world standing in for images.
//!
//! A scene is a handful of object groups (noun, count, optional color,
//! optional action) plus one spatial relation. Group 0 is the focus object
//! that every question is about. The scene feature vector is a fixed random
//! projection of a slot-structured one-hot description of the *visible*
//! scene; with the relevance-drop probability the focus group is occluded,
//! so the explainers cannot recover it while labels and references still
//! describe the true scene.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::sentence_question_relevance;
use crate::seed::component_rng;
use crate::text::{
    build_word_list, tokenize, word_label_vector, StopWords, TextError, Vocabulary, WordList,
    END_TOKEN,
};

pub const NOUNS: [&str; 30] = [
    "dog", "cat", "horse", "cow", "bird", "elephant", "giraffe", "zebra", "bear", "duck", "goat",
    "monkey", "rabbit", "pig", "lion", "table", "chair", "car", "bus", "truck", "boat", "kite",
    "ball", "umbrella", "bike", "lamp", "plate", "cup", "phone", "clock",
];
/// The first `ANIMATE` nouns can carry an action.
pub const ANIMATE: usize = 15;
pub const COLORS: [&str; 8] = [
    "red", "blue", "green", "yellow", "white", "black", "brown", "orange",
];
pub const ACTIONS: [&str; 6] = [
    "sitting", "standing", "running", "eating", "sleeping", "walking",
];
pub const RELATIONS: [&str; 8] = [
    "next to", "near", "behind", "in front of", "beside", "under", "above", "on top of",
];
/// Caption count words; a lone object in a one-object scene takes "a".
const COUNT_WORDS: [&str; 3] = ["one", "two", "three"];
const COUNT_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];
const NUMBER_ANSWERS: [&str; 3] = ["1", "2", "3"];
pub const MAX_GROUPS: usize = 4;
/// Relative frequency of scenes with 1..=4 object groups.
const GROUP_WEIGHTS: [f64; MAX_GROUPS] = [0.35, 0.3, 0.2, 0.15];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("instance file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("caption source {source_name} needs {needs}")]
    MissingCaption {
        source_name: &'static str,
        needs: &'static str,
    },
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub train_size: usize,
    pub val_size: usize,
    /// Number of nouns drawn from the lexicon (at most 30).
    pub nouns: usize,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to scene features.
    pub feature_noise: f64,
    /// Word-probability noise applied when explanations are simulated.
    pub detector_noise: f64,
    /// Per-token caption substitution rate applied when simulating captions.
    pub caption_corruption: f64,
    /// Chance that the queried object is hidden from the explainers.
    pub relevance_drop: f64,
    /// Chance that the salient caption leaves out the focus color, which
    /// then only appears in an extra reference.
    pub caption_color_drop: f64,
    /// Share of yes/no questions whose answer is "yes".
    pub yes_bias: f64,
    /// Chance that a human answer differs from the true answer.
    pub disagreement: f64,
    pub human_answers: usize,
    pub color_prob: f64,
    pub action_prob: f64,
    pub word_list_top_n: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            train_size: 5000,
            val_size: 1000,
            nouns: 30,
            feature_dim: 128,
            feature_noise: 0.1,
            detector_noise: 0.0,
            caption_corruption: 0.0,
            relevance_drop: 0.3,
            caption_color_drop: 0.3,
            yes_bias: 0.75,
            disagreement: 0.2,
            human_answers: 10,
            color_prob: 0.7,
            action_prob: 0.6,
            word_list_top_n: 100,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = [
            ("detector_noise", self.detector_noise),
            ("caption_corruption", self.caption_corruption),
            ("relevance_drop", self.relevance_drop),
            ("caption_color_drop", self.caption_color_drop),
            ("disagreement", self.disagreement),
            ("color_prob", self.color_prob),
            ("action_prob", self.action_prob),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(0.5..=1.0).contains(&self.yes_bias) {
            return Err(SynthError::Config(format!(
                "yes_bias = {} outside [0.5, 1]",
                self.yes_bias
            )));
        }
        if !(MAX_GROUPS + 1..=NOUNS.len()).contains(&self.nouns) {
            return Err(SynthError::Config(format!(
                "nouns = {} outside [{}, {}]",
                self.nouns,
                MAX_GROUPS + 1,
                NOUNS.len()
            )));
        }
        if self.feature_noise < 0.0 || !self.feature_noise.is_finite() {
            return Err(SynthError::Config("feature_noise must be >= 0".into()));
        }
        for (name, v) in [
            ("train_size", self.train_size),
            ("val_size", self.val_size),
            ("feature_dim", self.feature_dim),
            ("human_answers", self.human_answers),
            ("word_list_top_n", self.word_list_top_n),
        ] {
            if v == 0 {
                return Err(SynthError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [QuestionType::YesNo, QuestionType::Number, QuestionType::Other];

    pub fn label(self) -> &'static str {
        match self {
            QuestionType::YesNo => "Y/N",
            QuestionType::Number => "Num",
            QuestionType::Other => "Others",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "yes/no" => Some(QuestionType::YesNo),
            "number" => Some(QuestionType::Number),
            "other" => Some(QuestionType::Other),
            _ => None,
        }
    }
}

/// One record of an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: u64,
    pub question: String,
    pub question_type: QuestionType,
    pub answers: Vec<String>,
    pub captions: Vec<String>,
    pub word_labels: Vec<u8>,
    pub scene_features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_caption: Option<String>,
}

impl Instance {
    pub fn question_tokens(&self) -> Vec<String> {
        tokenize(&self.question)
    }

    pub fn caption_tokens(&self) -> Vec<Vec<String>> {
        self.captions.iter().map(|c| tokenize(c)).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.word_labels.iter().map(|&b| f64::from(b)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Group {
    pub noun: usize,
    pub count: usize,
    pub color: Option<usize>,
    pub action: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scene {
    pub groups: Vec<Group>,
    /// Relation between group 0 and group 1.
    pub relation: Option<usize>,
}

/// Generator-side facts about an instance that the file format omits.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMeta {
    pub scene: Scene,
    pub queried_noun: &'static str,
    pub queried_present: bool,
    pub occluded: bool,
    pub true_answer: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub train_meta: Vec<InstanceMeta>,
    pub val_meta: Vec<InstanceMeta>,
    pub word_list: WordList,
}

fn plural(noun: &str) -> String {
    if noun.ends_with('s') {
        format!("{noun}es")
    } else {
        format!("{noun}s")
    }
}

fn noun_phrase_with(g: &Group, count_word: &str) -> String {
    let noun = if g.count == 1 {
        NOUNS[g.noun].to_owned()
    } else {
        plural(NOUNS[g.noun])
    };
    match g.color {
        Some(c) => format!("{count_word} {} {noun}", COLORS[c]),
        None => format!("{count_word} {noun}"),
    }
}

fn noun_phrase(g: &Group) -> String {
    noun_phrase_with(g, COUNT_WORDS[g.count - 1])
}

fn be(g: &Group) -> &'static str {
    if g.count == 1 {
        "is"
    } else {
        "are"
    }
}

/// Caption describing the focus group, its action and the relation.
fn focus_caption(scene: &Scene, hide_color: bool) -> String {
    let shown = Group {
        color: scene.groups[0].color.filter(|_| !hide_color),
        ..scene.groups[0]
    };
    let g = &shown;
    let mut s = if scene.groups.len() == 1 {
        if g.count == 1 {
            format!("there is {}", noun_phrase_with(g, "a"))
        } else {
            format!("there are {}", noun_phrase(g))
        }
    } else {
        noun_phrase(g)
    };
    if let Some(a) = g.action {
        s.push(' ');
        s.push_str(ACTIONS[a]);
    }
    if let Some(r) = scene.relation {
        s.push_str(&format!(" {} {}", RELATIONS[r], noun_phrase(&scene.groups[1])));
    }
    s
}

fn group_caption(g: &Group) -> String {
    match g.action {
        Some(a) => format!("{} {}", noun_phrase(g), ACTIONS[a]),
        None => noun_phrase(g),
    }
}

/// References ordered with the most salient visible group first. A color
/// hidden from the focus caption is restated in a trailing reference.
fn reference_captions(scene: &Scene, occluded: bool, hide_color: bool) -> Vec<String> {
    let focus = focus_caption(scene, hide_color);
    let others = scene.groups[1..].iter().map(group_caption);
    let mut refs: Vec<String> = if occluded {
        others.chain(std::iter::once(focus)).collect()
    } else {
        std::iter::once(focus).chain(others).collect()
    };
    if hide_color {
        refs.push(group_caption(&scene.groups[0]));
    }
    refs
}

struct FeatureLayout {
    nouns: usize,
}

impl FeatureLayout {
    fn slot_width(&self) -> usize {
        self.nouns + COUNT_WORDS.len() + COLORS.len() + 1 + ACTIONS.len() + 1
    }

    fn width(&self) -> usize {
        MAX_GROUPS * self.slot_width() + RELATIONS.len() + 1
    }

    fn one_hot(&self, groups: &[Group], relation: Option<usize>) -> Vec<usize> {
        let mut on = Vec::new();
        for (slot, g) in groups.iter().enumerate().take(MAX_GROUPS) {
            let base = slot * self.slot_width();
            on.push(base + g.noun);
            on.push(base + self.nouns + g.count - 1);
            let c0 = base + self.nouns + COUNT_WORDS.len();
            on.push(c0 + g.color.map_or(COLORS.len(), |c| c));
            let a0 = c0 + COLORS.len() + 1;
            on.push(a0 + g.action.map_or(ACTIONS.len(), |a| a));
        }
        let r0 = MAX_GROUPS * self.slot_width();
        on.push(r0 + relation.map_or(RELATIONS.len(), |r| r));
        on
    }
}

/// Fixed random projection shared by every split of one config.
fn projection(cfg: &GenConfig, width: usize) -> Vec<Vec<f64>> {
    let mut rng = component_rng(cfg.seed, "synthworld/projection");
    let scale = 1.0 / 3.0;
    (0..width)
        .map(|_| {
            (0..cfg.feature_dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn quantize(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Everything except word labels, which need the word list of the whole
/// training split.
struct Draft {
    instance: Instance,
    meta: InstanceMeta,
}

fn draw_instance(
    cfg: &GenConfig,
    id: u64,
    rng: &mut ChaCha8Rng,
    layout: &FeatureLayout,
    proj: &[Vec<f64>],
) -> Draft {
    let qtype = match weighted_index(rng, &[0.4, 0.2, 0.4]) {
        0 => QuestionType::YesNo,
        1 => QuestionType::Number,
        _ => QuestionType::Other,
    };
    let yes = qtype == QuestionType::YesNo && rng.random_bool(cfg.yes_bias);
    let present = qtype != QuestionType::YesNo || yes;
    let occluded = present && rng.random_bool(cfg.relevance_drop);
    let n_groups = if occluded {
        2 + weighted_index(rng, &GROUP_WEIGHTS[1..])
    } else {
        1 + weighted_index(rng, &GROUP_WEIGHTS)
    };
    // "other" questions ask about an attribute, which must then exist
    let ask_action = qtype == QuestionType::Other && rng.random_bool(0.5);
    let pool: Vec<usize> = (0..cfg.nouns).collect();
    let animate: Vec<usize> = (0..cfg.nouns.min(ANIMATE)).collect();
    let focus_noun = if ask_action {
        *animate.choose(rng).expect("animate nouns")
    } else {
        *pool.choose(rng).expect("nouns")
    };
    let mut used = vec![focus_noun];
    while used.len() < n_groups {
        let n = *pool.choose(rng).expect("nouns");
        if !used.contains(&n) {
            used.push(n);
        }
    }
    let groups: Vec<Group> = used
        .iter()
        .enumerate()
        .map(|(k, &noun)| {
            let count = weighted_index(rng, &COUNT_WEIGHTS) + 1;
            let force_color = k == 0 && qtype == QuestionType::Other && !ask_action;
            let force_action = k == 0 && ask_action;
            let color = (force_color || rng.random_bool(cfg.color_prob))
                .then(|| rng.random_range(0..COLORS.len()));
            let action = (noun < ANIMATE && (force_action || rng.random_bool(cfg.action_prob)))
                .then(|| rng.random_range(0..ACTIONS.len()));
            Group {
                noun,
                count,
                color,
                action,
            }
        })
        .collect();
    let relation = (n_groups >= 2).then(|| rng.random_range(0..RELATIONS.len()));
    let scene = Scene { groups, relation };
    let focus = scene.groups[0];
    let hide_color = focus.color.is_some() && rng.random_bool(cfg.caption_color_drop);

    let (queried, question, truth) = match qtype {
        QuestionType::YesNo => {
            let noun = if yes {
                focus.noun
            } else {
                let absent: Vec<usize> = pool.iter().copied().filter(|n| !used.contains(n)).collect();
                *absent.choose(rng).expect("absent noun")
            };
            let with_color = rng.random_bool(0.3);
            let color = match (yes, focus.color) {
                (true, Some(c)) => Some(c),
                (true, None) => None,
                (false, _) => Some(rng.random_range(0..COLORS.len())),
            };
            let q = match color.filter(|_| with_color) {
                Some(c) => format!("is there a {} {}?", COLORS[c], NOUNS[noun]),
                None => format!("is there a {}?", NOUNS[noun]),
            };
            (noun, q, if yes { "yes" } else { "no" }.to_owned())
        }
        QuestionType::Number => (
            focus.noun,
            format!("how many {} are there?", plural(NOUNS[focus.noun])),
            NUMBER_ANSWERS[focus.count - 1].to_owned(),
        ),
        QuestionType::Other => {
            let noun = if focus.count == 1 {
                format!("the {}", NOUNS[focus.noun])
            } else {
                format!("the {}", plural(NOUNS[focus.noun]))
            };
            if ask_action {
                (
                    focus.noun,
                    format!("what {} {noun} doing?", be(&focus)),
                    ACTIONS[focus.action.expect("forced action")].to_owned(),
                )
            } else {
                (
                    focus.noun,
                    format!("what color {} {noun}?", be(&focus)),
                    COLORS[focus.color.expect("forced color")].to_owned(),
                )
            }
        }
    };

    let alternatives: Vec<&str> = match qtype {
        QuestionType::YesNo => vec!["yes", "no"],
        QuestionType::Number => NUMBER_ANSWERS.to_vec(),
        QuestionType::Other if ask_action => ACTIONS.to_vec(),
        QuestionType::Other => COLORS.to_vec(),
    };
    let wrong: Vec<&str> = alternatives.into_iter().filter(|a| *a != truth).collect();
    let answers: Vec<String> = (0..cfg.human_answers)
        .map(|_| {
            if rng.random_bool(cfg.disagreement) {
                (*wrong.choose(rng).expect("alternatives")).to_owned()
            } else {
                truth.clone()
            }
        })
        .collect();

    let visible: Vec<Group> = if occluded {
        scene.groups[1..].to_vec()
    } else {
        scene.groups.clone()
    };
    let visible_relation = if occluded { None } else { scene.relation };
    let mut features = vec![0.0; cfg.feature_dim];
    for i in layout.one_hot(&visible, visible_relation) {
        features.iter_mut().zip(&proj[i]).for_each(|(f, p)| *f += p);
    }
    for f in features.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *f = quantize(*f + cfg.feature_noise * n);
    }

    let captions = reference_captions(&scene, occluded, hide_color);
    Draft {
        instance: Instance {
            id,
            question,
            question_type: qtype,
            answers,
            captions,
            word_labels: Vec::new(),
            scene_features: features,
            word_probs: None,
            generated_caption: None,
        },
        meta: InstanceMeta {
            scene,
            queried_noun: NOUNS[queried],
            queried_present: present,
            occluded,
            true_answer: truth,
        },
    }
}

fn draw_split(cfg: &GenConfig, label: &str, size: usize, id0: u64) -> (Vec<Instance>, Vec<InstanceMeta>) {
    let layout = FeatureLayout { nouns: cfg.nouns };
    let proj = projection(cfg, layout.width());
    let mut rng = component_rng(cfg.seed, label);
    (0..size)
        .map(|k| {
            let d = draw_instance(cfg, id0 + k as u64, &mut rng, &layout, &proj);
            (d.instance, d.meta)
        })
        .unzip()
}

/// Generates the train and validation splits and the word list built from
/// the training references. Pure in `config`.
pub fn generate_dataset(config: &GenConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let (mut train, train_meta) = draw_split(config, "synthworld/train", config.train_size, 0);
    let (mut val, val_meta) =
        draw_split(config, "synthworld/val", config.val_size, config.train_size as u64);
    let captions: Vec<Vec<String>> = train
        .iter()
        .flat_map(|i| i.captions.iter().map(|c| tokenize(c)))
        .collect();
    let word_list = build_word_list(&captions, config.word_list_top_n, &StopWords::default())?;
    label_instances(&mut train, &word_list);
    label_instances(&mut val, &word_list);
    Ok(Dataset {
        train,
        val,
        train_meta,
        val_meta,
        word_list,
    })
}

fn label_instances(instances: &mut [Instance], word_list: &WordList) {
    for inst in instances {
        inst.word_labels = word_label_vector(&inst.caption_tokens(), word_list)
            .into_iter()
            .map(|x| x as u8)
            .collect();
    }
}

/// Draws only the validation split of `config`, labelled against an
/// existing word list. Used to vary knobs without touching the training
/// split.
pub fn generate_val_split(
    config: &GenConfig,
    word_list: &WordList,
) -> Result<(Vec<Instance>, Vec<InstanceMeta>), SynthError> {
    config.validate()?;
    let (mut val, meta) =
        draw_split(config, "synthworld/val", config.val_size, config.train_size as u64);
    label_instances(&mut val, word_list);
    Ok((val, meta))
}

pub const PROB_FLOOR: f64 = 1e-6;

/// `clamp((1 - noise) y + noise u, eps, 1 - eps)` with `u ~ U(0, 1)` per entry.
pub fn perturb_word_probs(y: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = noise.clamp(0.0, 1.0);
    y.iter()
        .map(|&t| {
            let u: f64 = rng.random();
            ((1.0 - noise) * t + noise * u).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
        })
        .collect()
}

/// Replaces each non-stop-word token, with probability `rate`, by a
/// different random content token of `vocab`.
pub fn corrupt_caption(
    caption: &[String],
    rate: f64,
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    stop_words: &StopWords,
) -> Vec<String> {
    let pool = vocab.content_tokens();
    caption
        .iter()
        .map(|t| {
            if stop_words.contains(t) || pool.len() < 2 || !rng.random_bool(rate.clamp(0.0, 1.0)) {
                return t.clone();
            }
            loop {
                let r = pool.choose(rng).expect("non-empty pool");
                if r != t {
                    return r.clone();
                }
            }
        })
        .collect()
}

/// Where the reasoner's caption comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    /// Only the `#end` token.
    Null,
    /// The caption generator's output.
    Generated,
    /// The reference caption most relevant to the question.
    #[serde(rename = "gt")]
    RelevantGroundTruth,
}

impl CaptionSource {
    pub const ALL: [CaptionSource; 3] = [
        CaptionSource::Null,
        CaptionSource::Generated,
        CaptionSource::RelevantGroundTruth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CaptionSource::Null => "null",
            CaptionSource::Generated => "generated",
            CaptionSource::RelevantGroundTruth => "relevant-groundtruth",
        }
    }
}

pub fn caption_source_select(
    instance: &Instance,
    source: CaptionSource,
    question: &[String],
    vocab: &Vocabulary,
) -> Result<Vec<String>, SynthError> {
    match source {
        CaptionSource::Null => Ok(vec![END_TOKEN.to_owned()]),
        CaptionSource::Generated => instance
            .generated_caption
            .as_deref()
            .map(tokenize)
            .ok_or(SynthError::MissingCaption {
                source_name: "generated",
                needs: "an attached generated caption",
            }),
        CaptionSource::RelevantGroundTruth => {
            let refs = instance.caption_tokens();
            let mut best: Option<(f64, Vec<String>)> = None;
            for r in refs {
                let s = sentence_question_relevance(&r, question, vocab).value;
                if best.as_ref().is_none_or(|b| s > b.0) {
                    best = Some((s, r));
                }
            }
            best.map(|b| b.1).ok_or(SynthError::MissingCaption {
                source_name: "relevant-groundtruth",
                needs: "at least one reference caption",
            })
        }
    }
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<(), SynthError> {
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>, SynthError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Parse {
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct VqaQuestions {
    questions: Vec<VqaQuestion>,
}

#[derive(Deserialize)]
struct VqaQuestion {
    question_id: u64,
    question: String,
}

#[derive(Deserialize)]
struct VqaAnnotations {
    annotations: Vec<VqaAnnotation>,
}

#[derive(Deserialize)]
struct VqaAnnotation {
    question_id: u64,
    answer_type: String,
    answers: Vec<VqaAnswer>,
}

#[derive(Deserialize)]
struct VqaAnswer {
    answer: String,
}

/// Reads VQA-v1 style question and annotation JSON into instances without
/// captions, labels or scene features. Questions lacking an annotation are
/// dropped.
pub fn read_vqa_v1(questions: &str, annotations: &str) -> Result<Vec<Instance>, SynthError> {
    let parse = |what: &str, e: serde_json::Error| SynthError::Parse {
        line: e.line(),
        message: format!("{what}: {e}"),
    };
    let qs: VqaQuestions = serde_json::from_str(questions).map_err(|e| parse("questions", e))?;
    let anns: VqaAnnotations =
        serde_json::from_str(annotations).map_err(|e| parse("annotations", e))?;
    let by_id: std::collections::HashMap<u64, &VqaAnnotation> =
        anns.annotations.iter().map(|a| (a.question_id, a)).collect();
    let mut out = Vec::new();
    for q in &qs.questions {
        let Some(a) = by_id.get(&q.question_id) else {
            continue;
        };
        let question_type = QuestionType::parse(&a.answer_type).ok_or_else(|| SynthError::Parse {
            line: 0,
            message: format!("unknown answer_type {:?}", a.answer_type),
        })?;
        out.push(Instance {
            id: q.question_id,
            question: q.question.clone(),
            question_type,
            answers: a.answers.iter().map(|x| x.answer.clone()).collect(),
            captions: Vec::new(),
            word_labels: Vec::new(),
            scene_features: Vec::new(),
            word_probs: None,
            generated_caption: None,
        });
    }
    Ok(out)
}

/// Nouns mentioned anywhere in `tokens`, singular or plural.
pub fn mentioned_nouns(tokens: &[String]) -> HashSet<&'static str> {
    NOUNS
        .iter()
        .copied()
        .filter(|n| tokens.iter().any(|t| t == n || *t == plural(n)))
        .collect()
}
