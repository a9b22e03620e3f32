//! Answer accuracy and explanation-quality measurements.
//!
//! Caption metrics follow the conventions of the COCO caption toolkit except
//! where noted: METEOR is exact-match only (no stemming or synonyms), and the
//! fused sentence accuracy averages BLEU@1..4 into a single component.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{binary_tf, normalize, Vocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no human answers supplied")]
    NoHumanAnswers,
    #[error("vector lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("malformed idf table: {0}")]
    MalformedIdf(String),
}

/// A cosine value plus whether either side was the zero vector (in which
/// case the value is defined as 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<Similarity, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::Length(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(Similarity {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Similarity {
        value: (dot / (nu * nv)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Cosine between the ground-truth label vector and predicted probabilities.
pub fn word_accuracy(labels: &[f64], probs: &[f64]) -> Result<Similarity, MetricError> {
    cosine(labels, probs)
}

/// Cosine between the question's word-list vector and predicted probabilities.
pub fn word_question_relevance(question: &[f64], probs: &[f64]) -> Result<Similarity, MetricError> {
    cosine(question, probs)
}

/// Cosine of binary term-frequency vectors of caption and question.
pub fn sentence_question_relevance<S: AsRef<str>, T: AsRef<str>>(
    caption: &[S],
    question: &[T],
    vocab: &Vocabulary,
) -> Similarity {
    let q = binary_tf(question, vocab);
    let s = binary_tf(caption, vocab);
    cosine(&q, &s).expect("binary tf vectors share the vocabulary length")
}

/// Consensus accuracy `min(#matching humans / 3, 1)` after token
/// normalization of both sides.
pub fn vqa_accuracy<S: AsRef<str>>(predicted: &str, humans: &[S]) -> Result<f64, MetricError> {
    if humans.is_empty() {
        return Err(MetricError::NoHumanAnswers);
    }
    let p = normalize(predicted);
    let matches = humans
        .iter()
        .filter(|h| normalize(h.as_ref()) == p)
        .count();
    Ok((matches as f64 / 3.0).min(1.0))
}

type Ngram<'a> = &'a [String];

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Ngram<'_>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_default() += 1;
        }
    }
    counts
}

/// Which reference length the brevity penalty compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefLength {
    /// Closest to the candidate length; ties go to the shorter reference.
    #[default]
    Closest,
    Shortest,
}

/// Sentence BLEU@`max_n` with the closest-reference brevity penalty.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    bleu_with(candidate, references, max_n, RefLength::Closest)
}

/// Geometric mean of clipped n-gram precisions for `n = 1..=max_n` times the
/// brevity penalty `exp(1 - r/c)` when `c < r`. Unsmoothed: any zero
/// precision makes the score 0.
pub fn bleu_with(
    candidate: &[String],
    references: &[Vec<String>],
    max_n: usize,
    ref_length: RefLength,
) -> f64 {
    if candidate.is_empty() || references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut max_ref: HashMap<Ngram<'_>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_default();
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = candidate.len() as f64;
    let r = match ref_length {
        RefLength::Closest => references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| ((l as i64 - candidate.len() as i64).abs(), l))
            .unwrap_or(0),
        RefLength::Shortest => references.iter().map(|r| r.len()).min().unwrap_or(0),
    } as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

/// LCS F-measure with `beta = 1.2`, maximized over references.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    references
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

pub const METEOR_ALPHA: f64 = 0.9;
const METEOR_SEARCH_BUDGET: usize = 200_000;

struct ChunkSearch<'a> {
    cand: &'a [String],
    /// Reference positions of each candidate token's word.
    slots: Vec<Vec<usize>>,
    /// Matches each word must still receive in a maximum alignment.
    quota: HashMap<&'a str, usize>,
    /// Candidate occurrences of each word at positions >= i.
    remaining: Vec<HashMap<&'a str, usize>>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl ChunkSearch<'_> {
    fn run(&mut self, i: usize, last: Option<(usize, usize)>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best {
            return;
        }
        if i == self.cand.len() {
            self.best = chunks;
            return;
        }
        if self.nodes > METEOR_SEARCH_BUDGET {
            return;
        }
        let w = self.cand[i].as_str();
        let need = self.quota.get(w).copied().unwrap_or(0);
        if need > 0 {
            // prefer the reference slot that extends the current chunk
            let mut order = self.slots[i].clone();
            if let Some((pi, pj)) = last {
                if pi + 1 == i {
                    order.sort_by_key(|&j| j != pj + 1);
                }
            }
            for j in order {
                if self.used[j] {
                    continue;
                }
                let extends = matches!(last, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
                self.used[j] = true;
                *self.quota.get_mut(w).unwrap() -= 1;
                self.run(i + 1, Some((i, j)), chunks + usize::from(!extends));
                *self.quota.get_mut(w).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // skipping is allowed only while later occurrences can fill the quota
        let later = self.remaining[i + 1].get(w).copied().unwrap_or(0);
        if later >= need {
            self.run(i + 1, last, chunks);
        }
    }
}

/// Minimum chunk count over all maximum exact-match alignments, with the
/// number of matches. Falls back to the best alignment found when the search
/// budget is exhausted on long, highly repetitive inputs.
fn align_chunks(cand: &[String], reference: &[String]) -> (usize, usize) {
    let mut ref_pos: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in reference.iter().enumerate() {
        ref_pos.entry(t.as_str()).or_default().push(j);
    }
    let mut cand_count: HashMap<&str, usize> = HashMap::new();
    for t in cand {
        *cand_count.entry(t.as_str()).or_default() += 1;
    }
    let quota: HashMap<&str, usize> = cand_count
        .iter()
        .map(|(w, c)| (*w, (*c).min(ref_pos.get(w).map_or(0, Vec::len))))
        .collect();
    let matches: usize = quota.values().sum();
    if matches == 0 {
        return (0, 0);
    }
    let mut remaining = vec![HashMap::new(); cand.len() + 1];
    for i in (0..cand.len()).rev() {
        let mut m = remaining[i + 1].clone();
        *m.entry(cand[i].as_str()).or_default() += 1;
        remaining[i] = m;
    }
    let slots = cand
        .iter()
        .map(|t| ref_pos.get(t.as_str()).cloned().unwrap_or_default())
        .collect();
    let mut search = ChunkSearch {
        cand,
        slots,
        quota,
        remaining,
        used: vec![false; reference.len()],
        best: usize::MAX,
        nodes: 0,
    };
    search.run(0, None, 0);
    (matches, search.best)
}

/// Exact-match METEOR: `F_mean * (1 - 0.5 (chunks / matches)^3)` with
/// `F_mean = P R / (alpha P + (1 - alpha) R)`, maximized over references.
pub fn meteor_lite(candidate: &[String], references: &[Vec<String>]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let (m, chunks) = align_chunks(candidate, r);
            if m == 0 {
                return 0.0;
            }
            let m = m as f64;
            let p = m / candidate.len() as f64;
            let rec = m / r.len() as f64;
            let f_mean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
            let penalty = 0.5 * (chunks as f64 / m).powi(3);
            f_mean * (1.0 - penalty)
        })
        .fold(0.0, f64::max)
}

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

/// Inverse document frequencies of 1- to 4-grams over a reference corpus.
///
/// A document is the reference set of one instance. The weight of an n-gram
/// is `ln(N) - ln(max(1, df))`, so unseen n-grams get `ln(N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    doc_count: usize,
    weights: HashMap<Vec<String>, f64>,
}

impl IdfTable {
    pub fn from_references(docs: &[Vec<Vec<String>>]) -> Self {
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for refs in docs {
            let mut seen: std::collections::HashSet<&[String]> = Default::default();
            for r in refs {
                for n in 1..=CIDER_MAX_N {
                    if r.len() >= n {
                        seen.extend(r.windows(n));
                    }
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_default() += 1;
            }
        }
        let log_n = (docs.len().max(1) as f64).ln();
        let weights = df
            .into_iter()
            .map(|(g, d)| (g, log_n - (d.max(1) as f64).ln()))
            .collect();
        Self {
            doc_count: docs.len(),
            weights,
        }
    }

    /// Every n-gram weighted `ln(doc_count)`.
    pub fn uniform(doc_count: usize) -> Self {
        Self {
            doc_count,
            weights: HashMap::new(),
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        (self.doc_count.max(1) as f64).ln()
    }

    pub fn weight(&self, ngram: &[String]) -> f64 {
        self.weights
            .get(ngram)
            .copied()
            .unwrap_or_else(|| self.max_weight())
    }

    /// `# documents\t<N>` header, then `<n-gram>\t<weight>` lines sorted by
    /// n-gram.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, f64)> = self
            .weights
            .iter()
            .map(|(g, w)| (g.join(" "), *w))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = format!("# documents\t{}\n", self.doc_count);
        for (g, w) in rows {
            out.push_str(&format!("{g}\t{w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MetricError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| MetricError::MalformedIdf("empty file".into()))?;
        let doc_count = header
            .strip_prefix("# documents\t")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| MetricError::MalformedIdf(format!("bad header {header:?}")))?;
        let mut weights = HashMap::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (g, w) = line
                .split_once('\t')
                .ok_or_else(|| MetricError::MalformedIdf(format!("line {}: no tab", k + 2)))?;
            let w: f64 = w
                .parse()
                .map_err(|_| MetricError::MalformedIdf(format!("line {}: bad weight", k + 2)))?;
            weights.insert(g.split(' ').map(str::to_owned).collect(), w);
        }
        Ok(Self { doc_count, weights })
    }

    fn tfidf<'a>(&self, tokens: &'a [String], n: usize) -> (HashMap<Ngram<'a>, f64>, f64) {
        let v: HashMap<Ngram<'a>, f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, c)| (g, c as f64 * self.weight(g)))
            .collect();
        let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
        (v, norm)
    }
}

/// CIDEr-D in `[0, 10]`: clipped TF-IDF cosine per n-gram order with a
/// Gaussian length penalty, averaged over orders and references, times 10.
pub fn cider_d(candidate: &[String], references: &[Vec<String>], idf: &IdfTable) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for r in references {
        let delta = candidate.len() as f64 - r.len() as f64;
        let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        let mut per_ref = 0.0;
        for n in 1..=CIDER_MAX_N {
            let (vc, nc) = idf.tfidf(candidate, n);
            let (vr, nr) = idf.tfidf(r, n);
            if nc == 0.0 || nr == 0.0 {
                continue;
            }
            let dot: f64 = vc
                .iter()
                .filter_map(|(g, c)| vr.get(g).map(|rv| c.min(*rv) * rv))
                .sum();
            per_ref += dot / (nc * nr) * penalty;
        }
        total += per_ref / CIDER_MAX_N as f64;
    }
    10.0 * total / references.len() as f64
}

/// Component scores and their fusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub bleu: [f64; 4],
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
    pub accuracy: f64,
}

impl SentenceScores {
    /// Mean of `{mean(BLEU@1..4), METEOR, ROUGE-L, CIDEr-D / 10}`.
    pub fn fuse(bleu: [f64; 4], meteor: f64, rouge_l: f64, cider_d: f64) -> Self {
        let b = bleu.iter().sum::<f64>() / 4.0;
        let accuracy = (b + meteor + rouge_l + cider_d / 10.0) / 4.0;
        Self {
            bleu,
            meteor,
            rouge_l,
            cider_d,
            accuracy,
        }
    }
}

pub fn sentence_scores(
    candidate: &[String],
    references: &[Vec<String>],
    idf: &IdfTable,
    ref_length: RefLength,
) -> SentenceScores {
    let bleu = [1, 2, 3, 4].map(|n| bleu_with(candidate, references, n, ref_length));
    SentenceScores::fuse(
        bleu,
        meteor_lite(candidate, references),
        rouge_l(candidate, references),
        cider_d(candidate, references, idf),
    )
}

/// Fused caption accuracy in `[0, 1]`.
pub fn sentence_accuracy(candidate: &[String], references: &[Vec<String>], idf: &IdfTable) -> f64 {
    sentence_scores(candidate, references, idf, RefLength::Closest).accuracy
}

/// Explanation quality of one instance; every field lies in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub word_accuracy: f64,
    pub word_question_relevance: f64,
    pub sentence_accuracy: f64,
    pub sentence_question_relevance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityField {
    WordAccuracy,
    WordQuestionRelevance,
    SentenceAccuracy,
    SentenceQuestionRelevance,
}

impl QualityField {
    pub const ALL: [QualityField; 4] = [
        QualityField::WordAccuracy,
        QualityField::WordQuestionRelevance,
        QualityField::SentenceAccuracy,
        QualityField::SentenceQuestionRelevance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QualityField::WordAccuracy => "word accuracy",
            QualityField::WordQuestionRelevance => "w-q relevance",
            QualityField::SentenceAccuracy => "sentence accuracy",
            QualityField::SentenceQuestionRelevance => "s-q relevance",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            QualityField::WordAccuracy => "word_accuracy",
            QualityField::WordQuestionRelevance => "word_question_relevance",
            QualityField::SentenceAccuracy => "sentence_accuracy",
            QualityField::SentenceQuestionRelevance => "sentence_question_relevance",
        }
    }
}

impl QualityScores {
    pub fn get(&self, field: QualityField) -> f64 {
        match field {
            QualityField::WordAccuracy => self.word_accuracy,
            QualityField::WordQuestionRelevance => self.word_question_relevance,
            QualityField::SentenceAccuracy => self.sentence_accuracy,
            QualityField::SentenceQuestionRelevance => self.sentence_question_relevance,
        }
    }

    pub fn is_valid(&self) -> bool {
        QualityField::ALL
            .iter()
            .all(|&f| (0.0..=1.0).contains(&self.get(f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn consensus_accuracy_examples() {
        let mut humans = vec!["no"; 10];
        for (k, expected) in [(0, 0.0), (1, 1.0 / 3.0), (3, 1.0), (5, 1.0)] {
            humans.iter_mut().enumerate().for_each(|(i, h)| *h = if i < k { "yes" } else { "no" });
            assert_eq!(vqa_accuracy("yes", &humans).unwrap(), expected);
        }
        assert_eq!(vqa_accuracy("Yes!", &["yes", "yes", "yes"]).unwrap(), 1.0);
        assert_eq!(vqa_accuracy::<&str>("yes", &[]), Err(MetricError::NoHumanAnswers));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, 0.4], &[0.3, 0.4]).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
        let s = cosine(&[1.0, 1.0, 0.0], &[0.9, 0.1, 0.2]).unwrap();
        assert!((s.value - 1.0 / (2f64.sqrt() * 0.86f64.sqrt())).abs() < 1e-12);
        assert!((s.value - 0.7625).abs() < 1e-4);
        let z = cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(z, Similarity { value: 0.0, degenerate: true });
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bleu_examples() {
        let r = vec![t("the cat sat on the mat")];
        assert!((bleu(&r[0], &r, 4) - 1.0).abs() < 1e-12);
        let b = bleu(&t("the the the"), &r, 1);
        assert!((b - (2.0 / 3.0) * (-1.0f64).exp()).abs() < 1e-12);
        assert!((b - 0.2453).abs() < 1e-4);
        assert_eq!(bleu(&t("dog runs"), &r, 1), 0.0);
        assert_eq!(bleu(&[], &r, 1), 0.0);
    }

    #[test]
    fn bleu_reference_length_conventions() {
        let refs = vec![t("a b c d e f g h"), t("a b c")];
        let c = t("a b c d");
        // closest reference is length 3, so no penalty; shortest is also 3
        assert!((bleu_with(&c, &refs, 1, RefLength::Closest) - 1.0).abs() < 1e-12);
        let refs = vec![t("a b c d e"), t("a b c d e f g h i")];
        let c = t("a b c");
        let closest = bleu_with(&c, &refs, 1, RefLength::Closest);
        assert!((closest - (1.0 - 5.0 / 3.0f64).exp()).abs() < 1e-12);
        let shortest = bleu_with(&c, &refs, 1, RefLength::Shortest);
        assert_eq!(closest, shortest);
    }

    #[test]
    fn rouge_examples() {
        let r = vec![t("the cat sat on the mat")];
        assert!((rouge_l(&r[0], &r) - 1.0).abs() < 1e-12);
        let f = rouge_l(&t("the cat sat"), &r);
        assert!((f - 2.44 * 0.5 / (0.5 + 1.44)).abs() < 1e-12);
        assert!((f - 0.6289).abs() < 1e-4);
        assert_eq!(rouge_l(&t("dog runs"), &r), 0.0);
        assert_eq!(rouge_l(&[], &r), 0.0);
    }

    #[test]
    fn meteor_examples() {
        let m = meteor_lite(&t("a b c"), &[t("a b c")]);
        assert!((m - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        assert!((m - 0.9815).abs() < 1e-4);
        assert_eq!(meteor_lite(&t("x y"), &[t("a b c")]), 0.0);
        let m = meteor_lite(&t("c b a"), &[t("a b c")]);
        assert!((m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn meteor_prefers_fewest_chunks() {
        // "a" can align to either reference "a"; only the second keeps one chunk
        let (m, ch) = align_chunks(&t("a b"), &t("a x a b"));
        assert_eq!((m, ch), (2, 1));
    }

    #[test]
    fn cider_examples() {
        let r = vec![t("a dog on a bench")];
        let idf = IdfTable::uniform(10);
        assert!((cider_d(&r[0], &r, &idf) - 10.0).abs() < 1e-12);
        assert_eq!(cider_d(&t("zebra runs"), &r, &idf), 0.0);
        assert_eq!(cider_d(&[], &r, &idf), 0.0);
    }

    #[test]
    fn idf_table_round_trip_and_unseen_weight() {
        let docs = vec![vec![t("a dog")], vec![t("a cat"), t("the cat")]];
        let idf = IdfTable::from_references(&docs);
        assert_eq!(idf.doc_count(), 2);
        assert_eq!(idf.weight(&t("a")), 0.0);
        assert!((idf.weight(&t("dog")) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(idf.weight(&t("zebra")), idf.max_weight());
        let back = IdfTable::from_text(&idf.to_text()).unwrap();
        assert_eq!(back, idf);
        assert!(IdfTable::from_text("junk").is_err());
    }

    #[test]
    fn sentence_accuracy_extremes() {
        let docs = vec![vec![t("a dog on a bench")], vec![t("two cats")], vec![t("a red bus")]];
        let idf = IdfTable::from_references(&docs);
        let r = &docs[0];
        assert!((sentence_accuracy(&r[0], r, &idf) - 1.0).abs() < 1e-2);
        // METEOR caps a perfect single-chunk match slightly below 1
        let s = sentence_scores(&r[0], r, &idf, RefLength::Closest);
        assert_eq!(s.bleu, [1.0; 4]);
        assert!((s.cider_d - 10.0).abs() < 1e-12);
        assert_eq!(sentence_accuracy(&t("zebra runs fast"), r, &idf), 0.0);
    }

    #[test]
    fn sentence_relevance_examples() {
        let vocab = crate::text::Vocabulary::from_tokens(t(
            "is that a ferry on the water with boats near dock",
        ));
        let q = t("is that a ferry");
        assert!((sentence_question_relevance(&q, &q, &vocab).value - 1.0).abs() < 1e-12);
        assert_eq!(sentence_question_relevance(&t("water boats"), &q, &vocab).value, 0.0);
        // caption shares "a" and "ferry"; 6 distinct caption words
        let s = sentence_question_relevance(&t("a ferry on the water with"), &q, &vocab);
        assert!((s.value - 2.0 / (4f64.sqrt() * 6f64.sqrt())).abs() < 1e-12);
    }
}
