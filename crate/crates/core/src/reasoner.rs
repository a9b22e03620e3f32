//! The reasoning step: question and caption LSTMs over one shared embedding,
//! concatenated with the word probabilities and classified over candidate
//! answers.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::kernel::{
    dropout_mask, lstm_sequence_backward, lstm_sequence_forward, matvec_add, matvec_transpose_acc,
    outer_acc, softmax, softmax_cross_entropy, BatchNorm, BatchNormCache, KernelError, LstmParams,
    LstmStepCache, Parameters, Precision, Tensor,
};
use crate::text::{normalize, Vocabulary, END_TOKEN};
use crate::train::{self, LoopSpec, TrainLog};

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("unknown encoder {0:?} (expected question or caption)")]
    UnknownEncoder(String),
    #[error("unknown ablation mode {0:?} (expected word, sentence or full)")]
    UnknownMode(String),
    #[error("{mode} mode needs {component}")]
    MissingComponent {
        mode: AblationMode,
        component: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no training instance has its answer among the candidates")]
    EmptyDataset,
    #[error("malformed candidates file: {0}")]
    MalformedCandidates(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Which explanations feed the classifier. The question is always encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    Word,
    Sentence,
    #[default]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::Word, AblationMode::Sentence, AblationMode::Full];

    pub fn uses_words(self) -> bool {
        matches!(self, AblationMode::Word | AblationMode::Full)
    }

    pub fn uses_caption(self) -> bool {
        matches!(self, AblationMode::Sentence | AblationMode::Full)
    }

    /// Classifier input size for word-list size `v` and hidden size `h`.
    pub fn feature_dim(self, v: usize, h: usize) -> usize {
        let w = if self.uses_words() { v } else { 0 };
        let s = if self.uses_caption() { h } else { 0 };
        w + s + h
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Word => "word",
            AblationMode::Sentence => "sentence",
            AblationMode::Full => "full",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = ReasonerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(AblationMode::Word),
            "sentence" => Ok(AblationMode::Sentence),
            "full" => Ok(AblationMode::Full),
            other => Err(ReasonerError::UnknownMode(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoder {
    Question,
    Caption,
}

impl FromStr for Encoder {
    type Err = ReasonerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "question" => Ok(Encoder::Question),
            "caption" => Ok(Encoder::Caption),
            other => Err(ReasonerError::UnknownEncoder(other.to_owned())),
        }
    }
}

/// The answer label space.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerCandidates {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerCandidates {
    pub fn from_answers<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = Vec::new();
        for a in answers {
            let a = a.into();
            if !list.contains(&a) {
                list.push(a);
            }
        }
        let index = list.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Self {
            answers: list,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn answer(&self, i: usize) -> &str {
        &self.answers[i]
    }

    /// Index of an answer after tokenize-normalization.
    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(&normalize(answer)).copied()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.answers.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ReasonerError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let c = Self::from_answers(lines.iter().map(|l| normalize(l)));
        if c.len() != lines.len() {
            return Err(ReasonerError::MalformedCandidates("duplicate answer".into()));
        }
        if c.is_empty() {
            return Err(ReasonerError::MalformedCandidates("no answers".into()));
        }
        Ok(c)
    }
}

/// The `k` most frequent normalized answers, ties broken lexicographically.
pub fn build_answer_candidates<I, S>(answers: I, k: usize) -> AnswerCandidates
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for a in answers {
        let a = normalize(a.as_ref());
        if !a.is_empty() {
            *counts.entry(a).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if ranked.len() < k {
        log::warn!("only {} distinct answers for {k} candidate slots", ranked.len());
    }
    ranked.truncate(k);
    AnswerCandidates::from_answers(ranked.into_iter().map(|(a, _)| a))
}

/// Plurality of the human answers after normalization, lexicographic
/// tie-break.
pub fn plurality_answer<S: AsRef<str>>(answers: &[S]) -> Option<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for a in answers {
        *counts.entry(normalize(a.as_ref())).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(a, _)| a)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// Most common human answer, fixed for the whole run.
    #[default]
    Plurality,
    /// A human answer drawn afresh each time the example is visited.
    SampleHuman,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub mode: AblationMode,
    pub embed: usize,
    pub hidden: usize,
    pub batch_norm: bool,
    pub dropout: f64,
    pub batch_size: usize,
    pub first_epochs: usize,
    pub first_learning_rate: f64,
    pub second_epochs: usize,
    pub second_learning_rate: f64,
    pub max_len: usize,
    pub target: TargetRule,
    pub precision: Precision,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            mode: AblationMode::Full,
            embed: 32,
            hidden: 32,
            batch_norm: true,
            dropout: 0.5,
            batch_size: 128,
            first_epochs: 10,
            first_learning_rate: 0.01,
            second_epochs: 10,
            second_learning_rate: 0.001,
            max_len: 20,
            target: TargetRule::Plurality,
            precision: Precision::F64,
        }
    }
}

impl ReasonerConfig {
    /// Learning rate of zero-based `epoch` under the two-phase schedule.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.first_epochs {
            self.first_learning_rate
        } else {
            self.second_learning_rate
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.first_epochs + self.second_epochs
    }
}

/// Explanations and question for one prediction.
#[derive(Clone, Copy, Debug)]
pub struct ReasonerInput<'a> {
    pub word_probs: Option<&'a [f64]>,
    pub caption: Option<&'a [String]>,
    pub question: &'a [String],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReasonerModel {
    pub mode: AblationMode,
    pub embed: Tensor,
    pub question_lstm: LstmParams,
    pub caption_lstm: LstmParams,
    pub batch_norm: Option<BatchNorm>,
    pub w: Tensor,
    pub b: Tensor,
    words: usize,
    max_len: usize,
    vocab: Vocabulary,
}

impl Parameters for ReasonerModel {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.embed,
            &self.question_lstm.w_x,
            &self.question_lstm.w_h,
            &self.question_lstm.b,
            &self.caption_lstm.w_x,
            &self.caption_lstm.w_h,
            &self.caption_lstm.b,
        ];
        if let Some(bn) = &self.batch_norm {
            v.push(&bn.gamma);
            v.push(&bn.beta);
        }
        v.push(&self.w);
        v.push(&self.b);
        v
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.embed,
            &mut self.question_lstm.w_x,
            &mut self.question_lstm.w_h,
            &mut self.question_lstm.b,
            &mut self.caption_lstm.w_x,
            &mut self.caption_lstm.w_h,
            &mut self.caption_lstm.b,
        ];
        if let Some(bn) = &mut self.batch_norm {
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v.push(&mut self.w);
        v.push(&mut self.b);
        v
    }
}

/// Sizes fixing a reasoner's parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReasonerDims {
    pub mode: AblationMode,
    pub words: usize,
    pub embed: usize,
    pub hidden: usize,
    pub answers: usize,
    pub batch_norm: bool,
    pub max_len: usize,
}

pub const REASONER_KIND: &str = "reasoner";

/// Per-example forward state kept for the backward pass.
struct Trace {
    q: Vec<LstmStepCache>,
    q_ids: Vec<usize>,
    c: Vec<LstmStepCache>,
    c_ids: Vec<usize>,
    v: Vec<f64>,
}

impl ReasonerModel {
    pub fn zeros(dims: ReasonerDims, vocab: Vocabulary) -> Self {
        let d = dims.mode.feature_dim(dims.words, dims.hidden);
        Self {
            mode: dims.mode,
            embed: Tensor::zeros(&[vocab.len(), dims.embed]),
            question_lstm: LstmParams::zeros(dims.embed, dims.hidden),
            caption_lstm: LstmParams::zeros(dims.embed, dims.hidden),
            batch_norm: dims.batch_norm.then(|| BatchNorm::new(d)),
            w: Tensor::zeros(&[dims.answers, d]),
            b: Tensor::zeros(&[dims.answers]),
            words: dims.words,
            max_len: dims.max_len,
            vocab,
        }
    }

    pub fn init(dims: ReasonerDims, vocab: Vocabulary, rng: &mut ChaCha8Rng) -> Self {
        let d = dims.mode.feature_dim(dims.words, dims.hidden);
        Self {
            mode: dims.mode,
            embed: Tensor::uniform(&[vocab.len(), dims.embed], 0.1, rng),
            question_lstm: LstmParams::init(dims.embed, dims.hidden, rng),
            caption_lstm: LstmParams::init(dims.embed, dims.hidden, rng),
            batch_norm: dims.batch_norm.then(|| BatchNorm::new(d)),
            w: Tensor::uniform_fan_in(&[dims.answers, d], d, rng),
            b: Tensor::zeros(&[dims.answers]),
            words: dims.words,
            max_len: dims.max_len,
            vocab,
        }
    }

    pub fn dims(&self) -> ReasonerDims {
        ReasonerDims {
            mode: self.mode,
            words: self.words,
            embed: self.embed.cols(),
            hidden: self.question_lstm.hidden_size(),
            answers: self.b.len(),
            batch_norm: self.batch_norm.is_some(),
            max_len: self.max_len,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn feature_dim(&self) -> usize {
        self.w.cols()
    }

    /// Token ids after truncation; an empty sequence becomes `#end`.
    pub fn token_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = self.vocab.encode(&tokens[..tokens.len().min(self.max_len)]);
        if ids.is_empty() {
            ids.push(self.vocab.end_id());
        }
        ids
    }

    fn lstm(&self, which: Encoder) -> &LstmParams {
        match which {
            Encoder::Question => &self.question_lstm,
            Encoder::Caption => &self.caption_lstm,
        }
    }

    fn run_encoder(&self, which: Encoder, ids: &[usize]) -> Vec<LstmStepCache> {
        let xs: Vec<Vec<f64>> = ids.iter().map(|&i| self.embed.row(i).to_vec()).collect();
        lstm_sequence_forward(self.lstm(which), &xs)
    }

    /// Final hidden state of the selected encoder over `tokens`.
    pub fn encode_sequence<S: AsRef<str>>(&self, which: Encoder, tokens: &[S]) -> Vec<f64> {
        let caches = self.run_encoder(which, &self.token_ids(tokens));
        caches.last().expect("at least one step").h.clone()
    }

    fn trace(&self, input: &ReasonerInput<'_>) -> Result<Trace, ReasonerError> {
        let mut v = Vec::with_capacity(self.feature_dim());
        if self.mode.uses_words() {
            let p = input.word_probs.ok_or(ReasonerError::MissingComponent {
                mode: self.mode,
                component: "word probabilities",
            })?;
            if p.len() != self.words {
                return Err(ReasonerError::Dimension(format!(
                    "{} word probabilities, model expects {}",
                    p.len(),
                    self.words
                )));
            }
            v.extend_from_slice(p);
        }
        let (c, c_ids) = if self.mode.uses_caption() {
            let cap = input.caption.ok_or(ReasonerError::MissingComponent {
                mode: self.mode,
                component: "a caption",
            })?;
            let ids = self.token_ids(cap);
            let caches = self.run_encoder(Encoder::Caption, &ids);
            v.extend_from_slice(&caches.last().expect("non-empty").h);
            (caches, ids)
        } else {
            (Vec::new(), Vec::new())
        };
        let q_ids = self.token_ids(input.question);
        let q = self.run_encoder(Encoder::Question, &q_ids);
        v.extend_from_slice(&q.last().expect("non-empty").h);
        Ok(Trace {
            q,
            q_ids,
            c,
            c_ids,
            v,
        })
    }

    fn classify(&self, x: &[f64]) -> Vec<f64> {
        let k = self.b.len();
        let mut z = vec![0.0; k];
        matvec_add(self.w.data(), k, x.len(), x, self.b.data(), &mut z);
        z
    }

    /// The concatenated feature vector `[v_w, v_s, v_q]` for the active mode.
    pub fn features(&self, input: &ReasonerInput<'_>) -> Result<Vec<f64>, ReasonerError> {
        Ok(self.trace(input)?.v)
    }

    /// Answer distribution in evaluation mode (running batch-norm statistics,
    /// no dropout).
    pub fn reason(&self, input: &ReasonerInput<'_>) -> Result<Vec<f64>, ReasonerError> {
        let mut v = self.trace(input)?.v;
        if let Some(bn) = &self.batch_norm {
            v = bn.forward_eval(&v);
        }
        Ok(softmax(&self.classify(&v))?)
    }

    /// Mean cross entropy over a batch with batch-norm in training mode.
    /// `masks` are dropout masks on the normalized features; gradients go to
    /// `grad` when given. Returns the loss and the batch-norm cache.
    pub fn batch_loss(
        &self,
        inputs: &[ReasonerInput<'_>],
        targets: &[usize],
        masks: Option<&[Vec<f64>]>,
        mut grad: Option<&mut ReasonerModel>,
    ) -> Result<(f64, Option<BatchNormCache>), ReasonerError> {
        let traces = inputs
            .iter()
            .map(|i| self.trace(i))
            .collect::<Result<Vec<_>, _>>()?;
        let vs: Vec<Vec<f64>> = traces.iter().map(|t| t.v.clone()).collect();
        let (ys, cache) = match &self.batch_norm {
            Some(bn) => {
                let (ys, cache) = bn.forward_train(&vs)?;
                (ys, Some(cache))
            }
            None => (vs, None),
        };
        let n = inputs.len() as f64;
        let d = self.feature_dim();
        let mut loss = 0.0;
        let mut dys = Vec::with_capacity(inputs.len());
        for (k, (y, &target)) in ys.iter().zip(targets).enumerate() {
            let x: Vec<f64> = match masks {
                Some(m) => y.iter().zip(&m[k]).map(|(a, b)| a * b).collect(),
                None => y.clone(),
            };
            let (l, mut g) = softmax_cross_entropy(&self.classify(&x), target)?;
            loss += l / n;
            if let Some(grad) = grad.as_deref_mut() {
                g.iter_mut().for_each(|v| *v /= n);
                outer_acc(grad.w.data_mut(), d, &g, &x);
                grad.b.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                let mut dx = vec![0.0; d];
                matvec_transpose_acc(self.w.data(), d, &g, &mut dx);
                if let Some(m) = masks {
                    dx.iter_mut().zip(&m[k]).for_each(|(a, b)| *a *= b);
                }
                dys.push(dx);
            }
        }
        let Some(grad) = grad else {
            return Ok((loss, cache));
        };
        let dvs = match (&self.batch_norm, &cache) {
            (Some(bn), Some(c)) => bn.backward(c, &dys, grad.batch_norm.as_mut().expect("same layout")),
            _ => dys,
        };
        let h = self.question_lstm.hidden_size();
        let offset_s = if self.mode.uses_words() { self.words } else { 0 };
        let offset_q = offset_s + if self.mode.uses_caption() { h } else { 0 };
        for (t, dv) in traces.iter().zip(&dvs) {
            if self.mode.uses_caption() {
                self.backward_encoder(Encoder::Caption, &t.c, &t.c_ids, &dv[offset_s..offset_s + h], grad);
            }
            self.backward_encoder(Encoder::Question, &t.q, &t.q_ids, &dv[offset_q..offset_q + h], grad);
        }
        Ok((loss, cache))
    }

    fn backward_encoder(
        &self,
        which: Encoder,
        caches: &[LstmStepCache],
        ids: &[usize],
        dh_last: &[f64],
        grad: &mut ReasonerModel,
    ) {
        let h = dh_last.len();
        let mut dh_steps = vec![vec![0.0; h]; caches.len()];
        *dh_steps.last_mut().expect("non-empty") = dh_last.to_vec();
        let lstm_grad = match which {
            Encoder::Question => &mut grad.question_lstm,
            Encoder::Caption => &mut grad.caption_lstm,
        };
        let dxs = lstm_sequence_backward(self.lstm(which), caches, &dh_steps, lstm_grad);
        for (dx, &id) in dxs.iter().zip(ids) {
            grad.embed
                .row_mut(id)
                .iter_mut()
                .zip(dx)
                .for_each(|(a, b)| *a += b);
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let d = self.dims();
        let mut tensors: Vec<Tensor> = self.tensors().into_iter().cloned().collect();
        if let Some(bn) = &self.batch_norm {
            tensors.push(bn.running_mean.clone());
            tensors.push(bn.running_var.clone());
        }
        let mode = AblationMode::ALL.iter().position(|m| *m == d.mode).unwrap_or(2) as u64;
        Checkpoint::new(
            REASONER_KIND,
            vec![
                mode,
                d.words as u64,
                d.embed as u64,
                d.hidden as u64,
                d.answers as u64,
                u64::from(d.batch_norm),
                d.max_len as u64,
                self.vocab.len() as u64,
            ],
            tensors,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint, vocab: Vocabulary) -> Result<Self, ReasonerError> {
        ck.expect_kind(REASONER_KIND)?;
        let mode = *AblationMode::ALL
            .get(ck.dim(0)?)
            .ok_or_else(|| CheckpointError::Layout("bad mode".into()))?;
        if ck.dim(7)? != vocab.len() {
            return Err(ReasonerError::Dimension(format!(
                "checkpoint vocabulary {} vs supplied {}",
                ck.dim(7)?,
                vocab.len()
            )));
        }
        let dims = ReasonerDims {
            mode,
            words: ck.dim(1)?,
            embed: ck.dim(2)?,
            hidden: ck.dim(3)?,
            answers: ck.dim(4)?,
            batch_norm: ck.dim(5)? == 1,
            max_len: ck.dim(6)?,
        };
        let mut m = Self::zeros(dims, vocab);
        let mut targets = Vec::new();
        {
            let ReasonerModel {
                embed,
                question_lstm,
                caption_lstm,
                batch_norm,
                w,
                b,
                ..
            } = &mut m;
            targets.extend([embed]);
            targets.extend([&mut question_lstm.w_x, &mut question_lstm.w_h, &mut question_lstm.b]);
            targets.extend([&mut caption_lstm.w_x, &mut caption_lstm.w_h, &mut caption_lstm.b]);
            let mut buffers = Vec::new();
            if let Some(bn) = batch_norm {
                targets.extend([&mut bn.gamma, &mut bn.beta]);
                buffers.extend([&mut bn.running_mean, &mut bn.running_var]);
            }
            targets.extend([w, b]);
            targets.extend(buffers);
            ck.restore_into(targets)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReasonerError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path, vocab: Vocabulary) -> Result<Self, ReasonerError> {
        Self::from_checkpoint(&Checkpoint::load(path)?, vocab)
    }
}

/// One training record: the inputs plus all human answers.
#[derive(Clone, Copy, Debug)]
pub struct TrainingExample<'a> {
    pub input: ReasonerInput<'a>,
    pub answers: &'a [String],
}

/// Minibatch Adam on the answer cross entropy with the two-phase learning
/// rate schedule. Instances whose target answer is not a candidate are
/// skipped and counted in the log.
pub fn train_reasoner(
    examples: &[TrainingExample<'_>],
    candidates: &AnswerCandidates,
    vocab: Vocabulary,
    words: usize,
    config: &ReasonerConfig,
    seed: u64,
) -> Result<(ReasonerModel, TrainLog), ReasonerError> {
    // per example: fixed plurality target and all in-candidate human answers
    let mut usable: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let Some(target) = plurality_answer(ex.answers).and_then(|a| candidates.index_of(&a)) else {
            continue;
        };
        let pool: Vec<usize> = ex.answers.iter().filter_map(|a| candidates.index_of(a)).collect();
        usable.push((i, target, pool));
    }
    let skipped = examples.len() - usable.len();
    if skipped > 0 {
        log::warn!("{skipped} training instances have no candidate answer");
    }
    if usable.is_empty() {
        return Err(ReasonerError::EmptyDataset);
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ReasonerDims {
        mode: config.mode,
        words,
        embed: config.embed,
        hidden: config.hidden,
        answers: candidates.len(),
        batch_norm: config.batch_norm,
        max_len: config.max_len,
    };
    let mut model = ReasonerModel::init(dims, vocab, &mut init_rng);
    let mut noise = ChaCha8Rng::seed_from_u64(init_rng.random());
    let mut shuffle = ChaCha8Rng::seed_from_u64(init_rng.random());
    let schedule = |e: usize| config.learning_rate(e);
    let d = model.feature_dim();
    let mut log = train::run(
        &mut model,
        LoopSpec {
            examples: usable.len(),
            epochs: config.total_epochs(),
            batch_size: config.batch_size,
            learning_rate: &schedule,
            precision: config.precision,
        },
        &mut shuffle,
        |m, idx, grad| {
            let inputs: Vec<ReasonerInput<'_>> = idx.iter().map(|&k| examples[usable[k].0].input).collect();
            let targets: Vec<usize> = idx
                .iter()
                .map(|&k| match config.target {
                    TargetRule::Plurality => usable[k].1,
                    TargetRule::SampleHuman => {
                        let pool = &usable[k].2;
                        pool[noise.random_range(0..pool.len())]
                    }
                })
                .collect();
            let masks = if config.dropout > 0.0 {
                Some(
                    (0..idx.len())
                        .map(|_| dropout_mask(d, config.dropout, &mut noise))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            } else {
                None
            };
            let (loss, cache) = m
                .batch_loss(&inputs, &targets, masks.as_deref(), Some(grad))
                .map_err(|e| match e {
                    ReasonerError::Kernel(k) => k,
                    other => KernelError::Invalid(other.to_string()),
                })?;
            if let (Some(bn), Some(c)) = (m.batch_norm.as_mut(), cache) {
                bn.update_running(&c);
            }
            Ok(loss)
        },
    )?;
    log.skipped = skipped;
    Ok((model, log))
}

/// Argmax answer and its probability; ties go to the earlier candidate.
pub fn predict_answer(
    model: &ReasonerModel,
    candidates: &AnswerCandidates,
    input: &ReasonerInput<'_>,
) -> Result<(String, f64), ReasonerError> {
    let p = model.reason(input)?;
    let mut best = 0;
    for (i, x) in p.iter().enumerate() {
        if *x > p[best] {
            best = i;
        }
    }
    Ok((candidates.answer(best).to_owned(), p[best]))
}

/// [`predict_answer`] over many inputs in parallel; output order follows
/// the input order.
pub fn predict_many(
    model: &ReasonerModel,
    candidates: &AnswerCandidates,
    inputs: &[ReasonerInput<'_>],
) -> Result<Vec<(String, f64)>, ReasonerError> {
    inputs
        .par_iter()
        .map(|i| predict_answer(model, candidates, i))
        .collect()
}

/// The token used for a caption-less input.
pub fn null_caption() -> Vec<String> {
    vec![END_TOKEN.to_owned()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{grad_check, lstm_cell_step};
    use crate::text::tokenize;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(tokenize("is there a cat dog red what color the"))
    }

    fn dims(mode: AblationMode, bn: bool) -> ReasonerDims {
        ReasonerDims {
            mode,
            words: 3,
            embed: 3,
            hidden: 4,
            answers: 3,
            batch_norm: bn,
            max_len: 20,
        }
    }

    #[test]
    fn candidates_examples() {
        let mut answers = vec!["yes"; 5];
        answers.extend(["no"; 3]);
        answers.push("red");
        let c = build_answer_candidates(&answers, 2);
        assert_eq!(c.answers(), ["yes", "no"]);
        let c = build_answer_candidates(&answers, 10);
        assert_eq!(c.answers(), ["yes", "no", "red"]);
        let c = build_answer_candidates(["b", "a", "Yes"], 3);
        assert_eq!(c.answers(), ["a", "b", "yes"]);
        assert_eq!(AnswerCandidates::from_text(&c.to_text()).unwrap(), c);
        assert!(AnswerCandidates::from_text("a\na\n").is_err());
    }

    #[test]
    fn plurality_breaks_ties_lexicographically() {
        assert_eq!(plurality_answer(&["no", "yes", "yes", "no"]).unwrap(), "no");
        assert_eq!(plurality_answer(&["2", "3", "3"]).unwrap(), "3");
        assert_eq!(plurality_answer::<&str>(&[]), None);
    }

    #[test]
    fn feature_dims_per_mode() {
        assert_eq!(AblationMode::Word.feature_dim(48, 32), 80);
        assert_eq!(AblationMode::Sentence.feature_dim(48, 32), 64);
        assert_eq!(AblationMode::Full.feature_dim(48, 32), 112);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ReasonerModel::init(dims(AblationMode::Full, true), vocab(), &mut rng);
        assert_eq!(m.feature_dim(), 3 + 2 * 4);
        assert!("bogus".parse::<AblationMode>().is_err());
        assert!("image".parse::<Encoder>().is_err());
    }

    #[test]
    fn zero_model_is_uniform_and_picks_first() {
        let m = ReasonerModel::zeros(dims(AblationMode::Full, false), vocab());
        let q = tokenize("is there a cat");
        let input = ReasonerInput {
            word_probs: Some(&[0.2, 0.3, 0.4]),
            caption: Some(&q),
            question: &q,
        };
        assert_eq!(m.encode_sequence(Encoder::Question, &q), vec![0.0; 4]);
        let p = m.reason(&input).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let c = AnswerCandidates::from_answers(["yes", "no", "red"]);
        let (a, prob) = predict_answer(&m, &c, &input).unwrap();
        assert_eq!(a, "yes");
        assert!((prob - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_component_is_an_error() {
        let m = ReasonerModel::zeros(dims(AblationMode::Full, false), vocab());
        let q = tokenize("is there a cat");
        let no_caption = ReasonerInput {
            word_probs: Some(&[0.0; 3]),
            caption: None,
            question: &q,
        };
        assert!(matches!(
            m.reason(&no_caption),
            Err(ReasonerError::MissingComponent { .. })
        ));
        let w = ReasonerModel::zeros(dims(AblationMode::Word, false), vocab());
        assert!(w.reason(&no_caption).is_ok());
    }

    #[test]
    fn single_token_encoding_is_one_cell_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ReasonerModel::init(dims(AblationMode::Full, false), vocab(), &mut rng);
        let h = m.encode_sequence(Encoder::Caption, &["cat"]);
        let id = m.vocab().index_of("cat").unwrap();
        let x = Tensor::vector(m.embed.row(id).to_vec());
        let zero = Tensor::zeros(&[4]);
        let (h1, _) = lstm_cell_step(&x, &zero, &zero, &m.caption_lstm).unwrap();
        assert_eq!(h, h1.data());
    }

    #[test]
    fn hand_set_two_class_softmax() {
        let v = Vocabulary::from_tokens(["q"]);
        let d = ReasonerDims {
            mode: AblationMode::Word,
            words: 1,
            embed: 1,
            hidden: 1,
            answers: 2,
            batch_norm: false,
            max_len: 20,
        };
        let mut m = ReasonerModel::zeros(d, v);
        // v = [p_w, h_q] with h_q = 0 under zero LSTM parameters
        m.w = Tensor::matrix(2, 2, vec![2.0, 0.0, -1.0, 0.0]).unwrap();
        m.b = Tensor::vector(vec![0.0, 0.5]);
        let q = vec!["q".to_owned()];
        let p = m
            .reason(&ReasonerInput {
                word_probs: Some(&[0.5]),
                caption: None,
                question: &q,
            })
            .unwrap();
        let (z0, z1) = (1.0f64, 0.0f64);
        let expected = z0.exp() / (z0.exp() + z1.exp());
        assert!((p[0] - expected).abs() < 1e-15);
    }

    fn toy_batch() -> (Vec<Vec<String>>, Vec<Vec<String>>) {
        (
            vec![tokenize("is there a cat"), tokenize("what color the dog")],
            vec![tokenize("a red cat"), tokenize("the dog")],
        )
    }

    #[test]
    fn full_gradient_check_with_batch_norm_and_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = ReasonerModel::init(dims(AblationMode::Full, true), vocab(), &mut rng);
        let (qs, cs) = toy_batch();
        let probs = [vec![0.9, 0.1, 0.4], vec![0.2, 0.8, 0.5]];
        let inputs: Vec<ReasonerInput<'_>> = (0..2)
            .map(|k| ReasonerInput {
                word_probs: Some(&probs[k]),
                caption: Some(&cs[k]),
                question: &qs[k],
            })
            .collect();
        let masks = vec![
            dropout_mask(m.feature_dim(), 0.3, &mut rng).unwrap(),
            dropout_mask(m.feature_dim(), 0.3, &mut rng).unwrap(),
        ];
        let report = grad_check(
            |flat| {
                let mut p = m.clone();
                p.assign_flat(flat).unwrap();
                let mut g = p.clone();
                g.zero_grad();
                let (l, _) = p.batch_loss(&inputs, &[0, 2], Some(&masks), Some(&mut g)).unwrap();
                (l, g.flatten())
            },
            &m.flatten(),
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn shared_embedding_collects_both_encoders() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ReasonerModel::init(dims(AblationMode::Sentence, false), vocab(), &mut rng);
        let q = tokenize("cat");
        let c = tokenize("cat");
        let input = [ReasonerInput {
            word_probs: None,
            caption: Some(&c),
            question: &q,
        }];
        let mut g = m.clone();
        g.zero_grad();
        m.batch_loss(&input, &[1], None, Some(&mut g)).unwrap();
        let id = m.vocab().index_of("cat").unwrap();
        // gradient with only one encoder's path, obtained by swapping the
        // caption for a different token
        let other = tokenize("dog");
        let q_only = [ReasonerInput {
            word_probs: None,
            caption: Some(&other),
            question: &q,
        }];
        let mut gq = m.clone();
        gq.zero_grad();
        m.batch_loss(&q_only, &[1], None, Some(&mut gq)).unwrap();
        let both = g.embed.row(id);
        let single = gq.embed.row(id);
        assert!(both.iter().zip(single).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn encoders_do_not_share_lstm_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = ReasonerModel::init(dims(AblationMode::Full, false), vocab(), &mut rng);
        let t = tokenize("a red cat");
        let q0 = m.encode_sequence(Encoder::Question, &t);
        let c0 = m.encode_sequence(Encoder::Caption, &t);
        m.caption_lstm.b.data_mut()[0] += 0.5;
        assert_eq!(m.encode_sequence(Encoder::Question, &t), q0);
        assert_ne!(m.encode_sequence(Encoder::Caption, &t), c0);
        let id = m.vocab().index_of("cat").unwrap();
        m.embed.row_mut(id)[0] += 0.5;
        assert_ne!(m.encode_sequence(Encoder::Question, &t), q0);
    }

    #[test]
    fn schedule_and_memorization() {
        let cfg = ReasonerConfig::default();
        let lrs: Vec<f64> = (0..20).map(|e| cfg.learning_rate(e)).collect();
        assert!(lrs[..10].iter().all(|&l| l == 0.01));
        assert!(lrs[10..].iter().all(|&l| l == 0.001));

        let q = tokenize("what color is the cat");
        let c = tokenize("a red cat");
        let answers: Vec<String> = vec!["red".into(); 10];
        let ex = [TrainingExample {
            input: ReasonerInput {
                word_probs: Some(&[1.0, 0.0, 1.0]),
                caption: Some(&c),
                question: &q,
            },
            answers: &answers,
        }];
        let cands = AnswerCandidates::from_answers(["yes", "no", "red"]);
        let cfg = ReasonerConfig {
            batch_norm: false,
            dropout: 0.0,
            batch_size: 1,
            first_epochs: 60,
            second_epochs: 5,
            ..ReasonerConfig::default()
        };
        let (m, log) = train_reasoner(&ex, &cands, vocab(), 3, &cfg, 3).unwrap();
        assert!(log.final_loss().unwrap() < log.initial_loss().unwrap());
        assert_eq!(log.learning_rates.len(), 65);
        let (a, p) = predict_answer(&m, &cands, &ex[0].input).unwrap();
        assert_eq!(a, "red");
        assert!(p > 0.9);
        let (m2, _) = train_reasoner(&ex, &cands, vocab(), 3, &cfg, 3).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn checkpoint_keeps_running_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = ReasonerModel::init(dims(AblationMode::Full, true), vocab(), &mut rng);
        m.batch_norm.as_mut().unwrap().running_mean.fill(0.25);
        let back = ReasonerModel::from_checkpoint(&m.to_checkpoint(), vocab()).unwrap();
        assert_eq!(back, m);
    }
}
