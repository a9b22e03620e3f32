//! The explaining step: an attribute-word predictor and a caption generator,
//! both reading the scene feature vector that stands in for the image.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::kernel::{
    log_softmax, lstm_sequence_backward, lstm_sequence_forward, lstm_step_forward, matvec_add,
    matvec_transpose_acc, outer_acc, sigmoid, sigmoid_cross_entropy, softmax_cross_entropy,
    KernelError, LstmParams, Parameters, Precision, Tensor,
};
use crate::text::Vocabulary;
use crate::train::{self, LoopSpec, TrainLog};

#[derive(Debug, Error)]
pub enum ExplainerError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordPredictorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub precision: Precision,
}

impl Default for WordPredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 25,
            batch_size: 64,
            learning_rate: 0.005,
            precision: Precision::F64,
        }
    }
}

/// Two-layer perceptron `features -> tanh hidden -> word logits`.
#[derive(Clone, Debug, PartialEq)]
pub struct WordPredictor {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Parameters for WordPredictor {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

pub const WORD_PREDICTOR_KIND: &str = "word-predictor";

impl WordPredictor {
    pub fn zeros(features: usize, hidden: usize, words: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[hidden, features]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[words, hidden]),
            b2: Tensor::zeros(&[words]),
        }
    }

    pub fn init(features: usize, hidden: usize, words: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Tensor::uniform_fan_in(&[hidden, features], features, rng),
            b1: Tensor::uniform_fan_in(&[hidden], features, rng),
            w2: Tensor::uniform_fan_in(&[words, hidden], hidden, rng),
            b2: Tensor::uniform_fan_in(&[words], hidden, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_words(&self) -> usize {
        self.w2.rows()
    }

    fn check_features(&self, x: &[f64]) -> Result<(), ExplainerError> {
        if x.len() != self.feature_dim() {
            return Err(ExplainerError::Dimension(format!(
                "{} scene features, predictor expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, f, v) = (self.hidden_dim(), self.feature_dim(), self.num_words());
        let mut a = vec![0.0; h];
        matvec_add(self.w1.data(), h, f, x, self.b1.data(), &mut a);
        a.iter_mut().for_each(|z| *z = z.tanh());
        let mut z = vec![0.0; v];
        matvec_add(self.w2.data(), v, h, &a, self.b2.data(), &mut z);
        (a, z)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ExplainerError> {
        self.check_features(x)?;
        Ok(self.forward(x).1)
    }

    /// Word probabilities `sigmoid(logits)`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ExplainerError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    /// Summed sigmoid cross entropy of one example; gradients scaled by
    /// `scale` are accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        y: &[f64],
        scale: f64,
        grad: &mut WordPredictor,
    ) -> Result<f64, ExplainerError> {
        self.check_features(x)?;
        let (h, v) = (self.hidden_dim(), self.num_words());
        let (a, z) = self.forward(x);
        let (loss, mut dz) = sigmoid_cross_entropy(&z, y)?;
        dz.iter_mut().for_each(|g| *g *= scale);
        outer_acc(grad.w2.data_mut(), h, &dz, &a);
        add(grad.b2.data_mut(), &dz);
        let mut da = vec![0.0; h];
        matvec_transpose_acc(self.w2.data(), h, &dz, &mut da);
        debug_assert_eq!(dz.len(), v);
        let dpre: Vec<f64> = da.iter().zip(&a).map(|(g, a)| g * (1.0 - a * a)).collect();
        outer_acc(grad.w1.data_mut(), self.feature_dim(), &dpre, x);
        add(grad.b1.data_mut(), &dpre);
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            WORD_PREDICTOR_KIND,
            vec![
                self.feature_dim() as u64,
                self.hidden_dim() as u64,
                self.num_words() as u64,
            ],
            self.tensors().into_iter().cloned().collect(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ExplainerError> {
        ck.expect_kind(WORD_PREDICTOR_KIND)?;
        let mut m = Self::zeros(ck.dim(0)?, ck.dim(1)?, ck.dim(2)?);
        ck.restore_into(m.tensors_mut())?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExplainerError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ExplainerError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Fits the predictor to label vectors `ys` with minibatch Adam on the
/// element-wise sigmoid cross entropy, averaged over each batch.
pub fn train_word_predictor(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    config: &WordPredictorConfig,
    seed: u64,
) -> Result<(WordPredictor, TrainLog), ExplainerError> {
    if xs.is_empty() {
        return Err(ExplainerError::EmptyDataset);
    }
    if xs.len() != ys.len() {
        return Err(ExplainerError::Dimension(format!(
            "{} feature rows vs {} label rows",
            xs.len(),
            ys.len()
        )));
    }
    let (f, v) = (xs[0].len(), ys[0].len());
    if let Some(bad) = xs.iter().position(|x| x.len() != f) {
        return Err(ExplainerError::Dimension(format!("feature row {bad} has wrong length")));
    }
    if let Some(bad) = ys.iter().position(|y| y.len() != v) {
        return Err(ExplainerError::Dimension(format!("label row {bad} has wrong length")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = WordPredictor::init(f, config.hidden, v, &mut rng);
    let lr = config.learning_rate;
    let log = train::run(
        &mut model,
        LoopSpec {
            examples: xs.len(),
            epochs: config.epochs,
            batch_size: config.batch_size,
            learning_rate: &|_| lr,
            precision: config.precision,
        },
        &mut rng,
        |m, idx, grad| {
            let scale = 1.0 / idx.len() as f64;
            let mut total = 0.0;
            for &i in idx {
                total += m
                    .loss_and_grad(&xs[i], &ys[i], scale, grad)
                    .map_err(|e| KernelError::Invalid(e.to_string()))?;
            }
            Ok(total * scale)
        },
    )?;
    Ok((model, log))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "strategy")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerConfig {
    pub embed: usize,
    pub image_proj: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_len: usize,
    /// Train on every reference rather than the first (salient) one.
    pub all_references: bool,
    pub decode: DecodeMode,
    pub precision: Precision,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            image_proj: 32,
            hidden: 48,
            epochs: 12,
            batch_size: 32,
            learning_rate: 0.005,
            max_len: 16,
            all_references: false,
            decode: DecodeMode::Greedy,
            precision: Precision::F64,
        }
    }
}

/// LSTM decoder conditioned on a tanh projection of the scene features.
///
/// The step input is `[embed(previous token); image projection]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionGenerator {
    pub embed: Tensor,
    pub w_img: Tensor,
    pub b_img: Tensor,
    pub lstm: LstmParams,
    pub w_out: Tensor,
    pub b_out: Tensor,
    vocab: Vocabulary,
}

impl Parameters for CaptionGenerator {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.embed,
            &self.w_img,
            &self.b_img,
            &self.lstm.w_x,
            &self.lstm.w_h,
            &self.lstm.b,
            &self.w_out,
            &self.b_out,
        ]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.embed,
            &mut self.w_img,
            &mut self.b_img,
            &mut self.lstm.w_x,
            &mut self.lstm.w_h,
            &mut self.lstm.b,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }
}

pub const CAPTIONER_KIND: &str = "caption-generator";

/// Size of one caption generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaptionerDims {
    pub features: usize,
    pub embed: usize,
    pub image_proj: usize,
    pub hidden: usize,
}

impl CaptionGenerator {
    pub fn zeros(dims: CaptionerDims, vocab: Vocabulary) -> Self {
        let v = vocab.len();
        Self {
            embed: Tensor::zeros(&[v, dims.embed]),
            w_img: Tensor::zeros(&[dims.image_proj, dims.features]),
            b_img: Tensor::zeros(&[dims.image_proj]),
            lstm: LstmParams::zeros(dims.embed + dims.image_proj, dims.hidden),
            w_out: Tensor::zeros(&[v, dims.hidden]),
            b_out: Tensor::zeros(&[v]),
            vocab,
        }
    }

    pub fn init(dims: CaptionerDims, vocab: Vocabulary, rng: &mut ChaCha8Rng) -> Self {
        let v = vocab.len();
        Self {
            embed: Tensor::uniform(&[v, dims.embed], 0.1, rng),
            w_img: Tensor::uniform_fan_in(&[dims.image_proj, dims.features], dims.features, rng),
            b_img: Tensor::uniform_fan_in(&[dims.image_proj], dims.features, rng),
            lstm: LstmParams::init(dims.embed + dims.image_proj, dims.hidden, rng),
            w_out: Tensor::uniform_fan_in(&[v, dims.hidden], dims.hidden, rng),
            b_out: Tensor::uniform_fan_in(&[v], dims.hidden, rng),
            vocab,
        }
    }

    pub fn dims(&self) -> CaptionerDims {
        CaptionerDims {
            features: self.w_img.cols(),
            embed: self.embed.cols(),
            image_proj: self.w_img.rows(),
            hidden: self.lstm.hidden_size(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn image(&self, f: &[f64]) -> Result<Vec<f64>, ExplainerError> {
        let d = self.dims();
        if f.len() != d.features {
            return Err(ExplainerError::Dimension(format!(
                "{} scene features, captioner expects {}",
                f.len(),
                d.features
            )));
        }
        let mut img = vec![0.0; d.image_proj];
        matvec_add(self.w_img.data(), d.image_proj, d.features, f, self.b_img.data(), &mut img);
        img.iter_mut().for_each(|z| *z = z.tanh());
        Ok(img)
    }

    fn step_input(&self, token: usize, img: &[f64]) -> Vec<f64> {
        let mut x = self.embed.row(token).to_vec();
        x.extend_from_slice(img);
        x
    }

    fn out_logits(&self, h: &[f64]) -> Vec<f64> {
        let v = self.vocab.len();
        let mut z = vec![0.0; v];
        matvec_add(self.w_out.data(), v, h.len(), h, self.b_out.data(), &mut z);
        z
    }

    /// Teacher-forced negative log likelihood of `ids` framed by `#start` and
    /// `#end`, summed over the `ids.len() + 1` predictions. Gradients scaled
    /// by `scale` are accumulated into `grad` when given.
    pub fn sequence_loss(
        &self,
        features: &[f64],
        ids: &[usize],
        scale: f64,
        grad: Option<&mut CaptionGenerator>,
    ) -> Result<f64, ExplainerError> {
        let img = self.image(features)?;
        let mut inputs = vec![self.vocab.start_id()];
        inputs.extend_from_slice(ids);
        let mut targets = ids.to_vec();
        targets.push(self.vocab.end_id());
        let xs: Vec<Vec<f64>> = inputs.iter().map(|&t| self.step_input(t, &img)).collect();
        let caches = lstm_sequence_forward(&self.lstm, &xs);
        let hs = self.lstm.hidden_size();
        let mut loss = 0.0;
        let mut dh_steps = Vec::with_capacity(caches.len());
        let mut dlogits = Vec::with_capacity(caches.len());
        for (cache, &target) in caches.iter().zip(&targets) {
            let (l, mut g) = softmax_cross_entropy(&self.out_logits(&cache.h), target)?;
            loss += l;
            g.iter_mut().for_each(|x| *x *= scale);
            let mut dh = vec![0.0; hs];
            matvec_transpose_acc(self.w_out.data(), hs, &g, &mut dh);
            dh_steps.push(dh);
            dlogits.push(g);
        }
        let Some(grad) = grad else {
            return Ok(loss);
        };
        for (cache, g) in caches.iter().zip(&dlogits) {
            outer_acc(grad.w_out.data_mut(), hs, g, &cache.h);
            add(grad.b_out.data_mut(), g);
        }
        let dxs = lstm_sequence_backward(&self.lstm, &caches, &dh_steps, &mut grad.lstm);
        let e = self.embed.cols();
        let mut dimg = vec![0.0; img.len()];
        for (dx, &tok) in dxs.iter().zip(&inputs) {
            add(grad.embed.row_mut(tok), &dx[..e]);
            add(&mut dimg, &dx[e..]);
        }
        let dpre: Vec<f64> = dimg.iter().zip(&img).map(|(g, a)| g * (1.0 - a * a)).collect();
        outer_acc(grad.w_img.data_mut(), features.len(), &dpre, features);
        add(grad.b_img.data_mut(), &dpre);
        Ok(loss)
    }

    fn masked_log_probs(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.out_logits(h);
        z[self.vocab.start_id()] = f64::NEG_INFINITY;
        z[self.vocab.unk_id()] = f64::NEG_INFINITY;
        log_softmax(&z).expect("vocabulary is never empty")
    }

    /// Decodes a caption; reserved tokens never appear in the output.
    pub fn generate(
        &self,
        features: &[f64],
        max_len: usize,
        mode: DecodeMode,
    ) -> Result<Vec<String>, ExplainerError> {
        let img = self.image(features)?;
        let ids = match mode {
            DecodeMode::Greedy => self.greedy(&img, max_len),
            DecodeMode::Beam { width } => self.beam(&img, max_len, width.max(1)),
        };
        Ok(self.vocab.decode(&ids))
    }

    fn greedy(&self, img: &[f64], max_len: usize) -> Vec<usize> {
        let hs = self.lstm.hidden_size();
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut tok = self.vocab.start_id();
        let mut out = Vec::new();
        while out.len() < max_len {
            let cache = lstm_step_forward(&self.lstm, &self.step_input(tok, img), &h, &c);
            let lp = self.masked_log_probs(&cache.h);
            tok = argmax(&lp);
            if tok == self.vocab.end_id() {
                break;
            }
            out.push(tok);
            h = cache.h;
            c = cache.c;
        }
        out
    }

    fn beam(&self, img: &[f64], max_len: usize, width: usize) -> Vec<usize> {
        struct Hyp {
            ids: Vec<usize>,
            score: f64,
            h: Vec<f64>,
            c: Vec<f64>,
        }
        let hs = self.lstm.hidden_size();
        let mut live = vec![Hyp {
            ids: Vec::new(),
            score: 0.0,
            h: vec![0.0; hs],
            c: vec![0.0; hs],
        }];
        let mut done: Vec<(Vec<usize>, f64)> = Vec::new();
        while !live.is_empty() {
            let mut next: Vec<Hyp> = Vec::new();
            for hyp in &live {
                let prev = hyp.ids.last().copied().unwrap_or(self.vocab.start_id());
                let cache = lstm_step_forward(&self.lstm, &self.step_input(prev, img), &hyp.h, &hyp.c);
                let lp = self.masked_log_probs(&cache.h);
                for (tok, l) in lp.iter().enumerate() {
                    if !l.is_finite() {
                        continue;
                    }
                    let score = hyp.score + l;
                    if tok == self.vocab.end_id() {
                        done.push((hyp.ids.clone(), score));
                        continue;
                    }
                    let mut ids = hyp.ids.clone();
                    ids.push(tok);
                    next.push(Hyp {
                        ids,
                        score,
                        h: cache.h.clone(),
                        c: cache.c.clone(),
                    });
                }
            }
            next.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ids.cmp(&b.ids)));
            next.truncate(width);
            let (full, open): (Vec<Hyp>, Vec<Hyp>) =
                next.into_iter().partition(|h| h.ids.len() >= max_len);
            done.extend(full.into_iter().map(|h| (h.ids, h.score)));
            // stop once no open hypothesis can beat the best finished one
            let best_done = done.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
            live = open.into_iter().filter(|h| h.score > best_done).collect();
        }
        done.into_iter()
            .fold(None::<(Vec<usize>, f64)>, |best, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            })
            .map(|b| b.0)
            .unwrap_or_default()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let d = self.dims();
        Checkpoint::new(
            CAPTIONER_KIND,
            vec![
                d.features as u64,
                d.embed as u64,
                d.image_proj as u64,
                d.hidden as u64,
                self.vocab.len() as u64,
            ],
            self.tensors().into_iter().cloned().collect(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint, vocab: Vocabulary) -> Result<Self, ExplainerError> {
        ck.expect_kind(CAPTIONER_KIND)?;
        if ck.dim(4)? != vocab.len() {
            return Err(ExplainerError::Dimension(format!(
                "checkpoint vocabulary {} vs supplied {}",
                ck.dim(4)?,
                vocab.len()
            )));
        }
        let dims = CaptionerDims {
            features: ck.dim(0)?,
            embed: ck.dim(1)?,
            image_proj: ck.dim(2)?,
            hidden: ck.dim(3)?,
        };
        let mut m = Self::zeros(dims, vocab);
        ck.restore_into(m.tensors_mut())?;
        Ok(m)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Teacher-forced training on `(features, caption)` pairs; the loss is the
/// mean next-token cross entropy over each batch. Captions without any
/// in-vocabulary token are skipped.
pub fn train_caption_generator(
    examples: &[(&[f64], &[String])],
    vocab: Vocabulary,
    config: &CaptionerConfig,
    seed: u64,
) -> Result<(CaptionGenerator, TrainLog), ExplainerError> {
    let mut data: Vec<(&[f64], Vec<usize>)> = Vec::with_capacity(examples.len());
    let mut skipped = 0;
    for (f, caption) in examples {
        let mut ids = vocab.encode(caption);
        ids.truncate(config.max_len);
        if ids.iter().all(|&i| i == vocab.unk_id()) {
            skipped += 1;
            continue;
        }
        data.push((f, ids));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} captions with no in-vocabulary token");
    }
    if data.is_empty() {
        return Err(ExplainerError::EmptyDataset);
    }
    let features = data[0].0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = CaptionerDims {
        features,
        embed: config.embed,
        image_proj: config.image_proj,
        hidden: config.hidden,
    };
    let mut model = CaptionGenerator::init(dims, vocab, &mut rng);
    let lr = config.learning_rate;
    let mut log = train::run(
        &mut model,
        LoopSpec {
            examples: data.len(),
            epochs: config.epochs,
            batch_size: config.batch_size,
            learning_rate: &|_| lr,
            precision: config.precision,
        },
        &mut rng,
        |m, idx, grad| {
            let tokens: usize = idx.iter().map(|&i| data[i].1.len() + 1).sum();
            let scale = 1.0 / tokens as f64;
            let mut total = 0.0;
            for &i in idx {
                total += m
                    .sequence_loss(data[i].0, &data[i].1, scale, Some(grad))
                    .map_err(|e| KernelError::Invalid(e.to_string()))?;
            }
            Ok(total * scale)
        },
    )?;
    log.skipped = skipped;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::grad_check;
    use crate::text::tokenize;

    #[test]
    fn zero_predictor_outputs_half() {
        let m = WordPredictor::zeros(3, 4, 5);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5; 5]);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn saturated_negative_logits_give_zero_loss() {
        let mut m = WordPredictor::zeros(2, 2, 3);
        m.b2.fill(-50.0);
        let mut g = m.clone();
        let loss = m.loss_and_grad(&[0.3, 0.1], &[0.0; 3], 1.0, &mut g).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn word_predictor_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = WordPredictor::init(4, 3, 5, &mut rng);
        let x = [0.2, -0.4, 0.9, 0.1];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0];
        let report = grad_check(
            |flat| {
                let mut p = m.clone();
                p.assign_flat(flat).unwrap();
                let mut g = p.clone();
                g.zero_grad();
                let l = p.loss_and_grad(&x, &y, 1.0, &mut g).unwrap();
                (l, g.flatten())
            },
            &m.flatten(),
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::from_tokens(tokenize("a red cat sits"))
    }

    #[test]
    fn captioner_gradient_check_two_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = CaptionerDims {
            features: 3,
            embed: 2,
            image_proj: 2,
            hidden: 3,
        };
        let m = CaptionGenerator::init(dims, tiny_vocab(), &mut rng);
        let f = [0.5, -0.2, 0.8];
        let ids = m.vocab().encode(&["red", "cat"]);
        let report = grad_check(
            |flat| {
                let mut p = m.clone();
                p.assign_flat(flat).unwrap();
                let mut g = p.clone();
                g.zero_grad();
                let l = p.sequence_loss(&f, &ids, 1.0, Some(&mut g)).unwrap();
                (l, g.flatten())
            },
            &m.flatten(),
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn initial_loss_near_log_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vocab = tiny_vocab();
        let dims = CaptionerDims {
            features: 4,
            embed: 4,
            image_proj: 4,
            hidden: 8,
        };
        let mut m = CaptionGenerator::init(dims, vocab.clone(), &mut rng);
        m.w_out.scale(0.01);
        m.b_out.fill(0.0);
        let ids = vocab.encode(&["a", "cat"]);
        let loss = m.sequence_loss(&[0.1; 4], &ids, 1.0, None).unwrap() / 3.0;
        assert!((loss - (vocab.len() as f64).ln()).abs() < 0.05);
    }

    #[test]
    fn memorizes_single_caption() {
        let caption = tokenize("a red cat sits");
        let f = vec![0.3, -0.1, 0.7, 0.2];
        let cfg = CaptionerConfig {
            embed: 8,
            image_proj: 4,
            hidden: 16,
            epochs: 150,
            batch_size: 1,
            learning_rate: 0.02,
            ..CaptionerConfig::default()
        };
        let (m, log) =
            train_caption_generator(&[(&f, &caption)], tiny_vocab(), &cfg, 1).unwrap();
        assert!(log.final_loss().unwrap() < 0.1, "{:?}", log.final_loss());
        assert_eq!(m.generate(&f, 16, DecodeMode::Greedy).unwrap(), caption);
        assert_eq!(m.generate(&f, 16, DecodeMode::Beam { width: 3 }).unwrap(), caption);
        assert_eq!(m.generate(&f, 1, DecodeMode::Greedy).unwrap().len(), 1);
    }

    #[test]
    fn unusable_captions_are_skipped() {
        let f = vec![0.0; 2];
        let junk = tokenize("zebra");
        let good = tokenize("a cat");
        let cfg = CaptionerConfig {
            epochs: 1,
            ..CaptionerConfig::default()
        };
        let (_, log) =
            train_caption_generator(&[(&f, &junk), (&f, &good)], tiny_vocab(), &cfg, 0).unwrap();
        assert_eq!(log.skipped, 1);
        assert!(train_caption_generator(&[(&f, &junk)], tiny_vocab(), &cfg, 0).is_err());
    }

    #[test]
    fn checkpoints_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = WordPredictor::init(3, 2, 4, &mut rng);
        assert_eq!(WordPredictor::from_checkpoint(&w.to_checkpoint()).unwrap(), w);
        let dims = CaptionerDims {
            features: 3,
            embed: 2,
            image_proj: 2,
            hidden: 3,
        };
        let c = CaptionGenerator::init(dims, tiny_vocab(), &mut rng);
        let back = CaptionGenerator::from_checkpoint(&c.to_checkpoint(), tiny_vocab()).unwrap();
        assert_eq!(back, c);
        assert!(WordPredictor::from_checkpoint(&c.to_checkpoint()).is_err());
    }
}
