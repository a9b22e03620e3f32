//! Finite-difference gradient checks of every trainable model on small
//! randomized batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::explainers::{CaptionGenerator, CaptionerDims, WordPredictor};
use crate::kernel::{dropout_mask, grad_check, GradCheckReport, KernelError, Parameters};
use crate::reasoner::{AblationMode, ReasonerDims, ReasonerInput, ReasonerModel};
use crate::seed::sub_seed;
use crate::text::Vocabulary;

pub const GRADCHECK_EPS: f64 = 1e-3;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const TOY_WORDS: [&str; 8] = ["a", "red", "cat", "dog", "is", "there", "two", "what"];

fn toy_vocab() -> Vocabulary {
    Vocabulary::from_tokens(TOY_WORDS)
}

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| TOY_WORDS[rng.random_range(0..TOY_WORDS.len())].to_owned())
        .collect()
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn check<M, F>(model: &M, mut loss: F) -> Result<GradCheckReport, KernelError>
where
    M: Parameters + Clone,
    F: FnMut(&M, &mut M) -> f64,
{
    grad_check(
        |flat| {
            let mut p = model.clone();
            p.assign_flat(flat).expect("flat length matches");
            let mut g = p.clone();
            g.zero_grad();
            let l = loss(&p, &mut g);
            (l, g.flatten())
        },
        &model.flatten(),
        GRADCHECK_EPS,
    )
}

pub fn check_word_predictor(seed: u64) -> Result<GradCheckReport, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f, h, v) = (4, 3, 5);
    let m = WordPredictor::init(f, h, v, &mut rng);
    let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
        .map(|_| {
            let x = uniform_vec(&mut rng, f, -1.0, 1.0);
            let y = (0..v).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
            (x, y)
        })
        .collect();
    check(&m, |p, g| {
        batch
            .iter()
            .map(|(x, y)| p.loss_and_grad(x, y, 1.0 / 3.0, g).expect("toy shapes"))
            .sum::<f64>()
            / 3.0
    })
}

pub fn check_caption_generator(seed: u64) -> Result<GradCheckReport, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = CaptionerDims {
        features: 4,
        embed: 3,
        image_proj: 3,
        hidden: 4,
    };
    let m = CaptionGenerator::init(dims, toy_vocab(), &mut rng);
    let batch: Vec<(Vec<f64>, Vec<usize>)> = (0..2)
        .map(|_| {
            let x = uniform_vec(&mut rng, dims.features, -1.0, 1.0);
            let ids = m.vocab().encode(&random_tokens(&mut rng, 4));
            (x, ids)
        })
        .collect();
    check(&m, |p, g| {
        batch
            .iter()
            .map(|(x, ids)| p.sequence_loss(x, ids, 1.0, Some(g)).expect("toy shapes"))
            .sum()
    })
}

pub fn check_reasoner(seed: u64, mode: AblationMode) -> Result<GradCheckReport, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ReasonerDims {
        mode,
        words: 4,
        embed: 3,
        hidden: 3,
        answers: 4,
        batch_norm: true,
        max_len: 5,
    };
    let m = ReasonerModel::init(dims, toy_vocab(), &mut rng);
    let n = 3;
    let probs: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, 4, 0.05, 0.95)).collect();
    let captions: Vec<Vec<String>> = (0..n).map(|_| random_tokens(&mut rng, 4)).collect();
    let questions: Vec<Vec<String>> = (0..n).map(|_| random_tokens(&mut rng, 4)).collect();
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..dims.answers)).collect();
    let masks = (0..n)
        .map(|_| dropout_mask(m.feature_dim(), 0.2, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<ReasonerInput<'_>> = (0..n)
        .map(|k| ReasonerInput {
            word_probs: Some(&probs[k]),
            caption: Some(&captions[k]),
            question: &questions[k],
        })
        .collect();
    check(&m, |p, g| {
        p.batch_loss(&inputs, &targets, Some(&masks), Some(g))
            .expect("toy shapes")
            .0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckLine {
    pub model: String,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub worst_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub tolerance: f64,
    pub lines: Vec<GradcheckLine>,
}

impl GradcheckSummary {
    pub fn max_rel_error(&self) -> f64 {
        self.lines.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(&format!(
                "{:<20} seeds {:>3}  max rel error {:.3e} (seed {})\n",
                l.model, l.seeds, l.max_rel_error, l.worst_seed
            ));
        }
        s.push_str(&format!(
            "overall max rel error {:.3e} tolerance {:.0e}: {}\n",
            self.max_rel_error(),
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        ));
        s
    }
}

/// Runs every check on `seeds` seeds derived from `base`.
pub fn gradcheck_all(base: u64, seeds: usize) -> Result<GradcheckSummary, KernelError> {
    type Check = Box<dyn Fn(u64) -> Result<GradCheckReport, KernelError>>;
    let checks: Vec<(&str, Check)> = vec![
        ("word-predictor", Box::new(check_word_predictor)),
        ("caption-generator", Box::new(check_caption_generator)),
        ("reasoner-word", Box::new(|s| check_reasoner(s, AblationMode::Word))),
        ("reasoner-sentence", Box::new(|s| check_reasoner(s, AblationMode::Sentence))),
        ("reasoner-full", Box::new(|s| check_reasoner(s, AblationMode::Full))),
    ];
    let mut lines = Vec::new();
    for (name, f) in checks {
        let mut line = GradcheckLine {
            model: name.to_owned(),
            seeds,
            max_rel_error: 0.0,
            worst_seed: 0,
        };
        for k in 0..seeds {
            let seed = sub_seed(base, &format!("gradcheck/{name}/{k}"));
            let r = f(seed)?;
            if r.max_rel_error >= line.max_rel_error {
                line.max_rel_error = r.max_rel_error;
                line.worst_seed = seed;
            }
        }
        lines.push(line);
    }
    Ok(GradcheckSummary {
        tolerance: GRADCHECK_TOLERANCE,
        lines,
    })
}
