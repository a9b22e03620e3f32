//! Tokenization, vocabularies, the attribute word list and the binary
//! encodings built on top of them.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

pub const START_TOKEN: &str = "#start";
pub const END_TOKEN: &str = "#end";
pub const UNK_TOKEN: &str = "#unk";
pub const RESERVED: [&str; 3] = [START_TOKEN, END_TOKEN, UNK_TOKEN];

const DEFAULT_STOP_WORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("min_count must be at least 1")]
    MinCount,
    #[error("top_n must be at least 1")]
    TopN,
    #[error("malformed vocabulary file: {0}")]
    Malformed(String),
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Tokenized form joined by single spaces; used for answer matching.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

fn count_tokens<'a, I>(seqs: I) -> HashMap<&'a str, usize>
where
    I: IntoIterator<Item = &'a Vec<String>>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in seqs {
        for t in seq {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    counts
}

/// Descending count, then lexicographic.
fn ranked<'a>(counts: &HashMap<&'a str, usize>) -> Vec<(&'a str, usize)> {
    let mut v: Vec<(&str, usize)> = counts.iter().map(|(k, c)| (*k, *c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in tokens {
            let t = t.into();
            if !all.contains(&t) {
                all.push(t);
            }
        }
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens other than the reserved ones.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn start_id(&self) -> usize {
        0
    }

    pub fn end_id(&self) -> usize {
        1
    }

    pub fn unk_id(&self) -> usize {
        2
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < RESERVED.len()
    }

    /// Maps tokens to ids; out-of-vocabulary tokens become `#unk`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index_of(t.as_ref()).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter_map(|&i| self.token(i).map(str::to_owned))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TextError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(TextError::Malformed(
                "reserved tokens must lead the file".into(),
            ));
        }
        let set: HashSet<&str> = lines.iter().copied().collect();
        if set.len() != lines.len() {
            return Err(TextError::Malformed("duplicate token".into()));
        }
        Ok(Self::from_tokens(lines[RESERVED.len()..].iter().copied()))
    }
}

/// Keeps tokens seen at least `min_count` times, most frequent first.
pub fn build_vocabulary(corpus: &[Vec<String>], min_count: usize) -> Result<Vocabulary, TextError> {
    if min_count == 0 {
        return Err(TextError::MinCount);
    }
    let counts = count_tokens(corpus);
    let kept = ranked(&counts)
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
        .map(|(t, _)| t.to_owned());
    Ok(Vocabulary::from_tokens(kept))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopWords(HashSet<String>);

impl Default for StopWords {
    fn default() -> Self {
        Self::from_text(DEFAULT_STOP_WORDS)
    }
}

impl StopWords {
    /// One token per line; blank lines ignored.
    pub fn from_text(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn none() -> Self {
        Self(HashSet::new())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Singular form of `token` if stripping a plural suffix yields a known
/// word: `horses -> horse` (trailing `s`), `buses -> bus` (`-ses -> -s`).
pub fn fold_plural(token: &str, is_known: impl Fn(&str) -> bool) -> &str {
    if token.len() > 1 {
        if let Some(stem) = token.strip_suffix('s') {
            if is_known(stem) {
                return stem;
            }
            if let Some(stem) = token.strip_suffix("es") {
                if token.ends_with("ses") && is_known(stem) {
                    return stem;
                }
            }
        }
    }
    token
}

/// Share of token occurrences covered by a word list.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coverage {
    /// Over every token occurrence in the captions.
    pub all_tokens: f64,
    /// Over occurrences that are not stop words.
    pub content_tokens: f64,
}

/// The attribute vocabulary the word predictor is trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct WordList {
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub coverage: Coverage,
}

impl WordList {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = Vec::new();
        for w in words {
            let w = w.into();
            if !list.contains(&w) {
                list.push(w);
            }
        }
        let index = list.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            words: list,
            index,
            coverage: Coverage::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Index of `token`, insensitive to plural suffixes.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        let folded = fold_plural(token, |s| self.index.contains_key(s));
        self.index.get(folded).copied()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.words.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_words(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

impl fmt::Display for WordList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} words", self.words.len())
    }
}

/// Top `top_n` caption tokens, stop words removed, plural forms merged.
pub fn build_word_list(
    captions: &[Vec<String>],
    top_n: usize,
    stop_words: &StopWords,
) -> Result<WordList, TextError> {
    if top_n == 0 {
        return Err(TextError::TopN);
    }
    let counts = count_tokens(captions);
    let mut merged: HashMap<&str, usize> = HashMap::new();
    for (token, count) in ranked(&counts).into_iter().take(top_n) {
        if stop_words.contains(token) {
            continue;
        }
        let stem = fold_plural(token, |s| counts.contains_key(s));
        if stop_words.contains(stem) {
            continue;
        }
        *merged.entry(stem).or_default() += count;
    }
    let mut list = WordList::from_words(ranked(&merged).into_iter().map(|(w, _)| w));

    let (mut total, mut content, mut hit_all, mut hit_content) = (0usize, 0usize, 0usize, 0usize);
    for seq in captions {
        for t in seq {
            let stop = stop_words.contains(t);
            let hit = list.lookup(t).is_some();
            total += 1;
            hit_all += usize::from(hit);
            if !stop {
                content += 1;
                hit_content += usize::from(hit);
            }
        }
    }
    list.coverage = Coverage {
        all_tokens: ratio(hit_all, total),
        content_tokens: ratio(hit_content, content),
    };
    Ok(list)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// 1 for every vocabulary token present in `tokens`; OOV tokens dropped.
pub fn binary_tf<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            v[i] = 1.0;
        }
    }
    v
}

/// Label vector `y`: 1 for every list word mentioned in any reference caption.
pub fn word_label_vector(captions: &[Vec<String>], list: &WordList) -> Vec<f64> {
    let mut y = vec![0.0; list.len()];
    for t in captions.iter().flatten() {
        if let Some(i) = list.lookup(t) {
            y[i] = 1.0;
        }
    }
    y
}

/// 0-1 vector `q` of the list words a question mentions.
pub fn question_word_vector<S: AsRef<str>>(question: &[S], list: &WordList) -> Vec<f64> {
    let mut q = vec![0.0; list.len()];
    for t in question {
        if let Some(i) = list.lookup(t.as_ref()) {
            q[i] = 1.0;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("Is there a Ferry?"), ["is", "there", "a", "ferry"]);
        assert!(toks("").is_empty());
        assert_eq!(
            toks("woman sitting on a bench"),
            ["woman", "sitting", "on", "a", "bench"]
        );
        assert_eq!(toks("  two--dogs,,on 3 benches "), ["two", "dogs", "on", "3", "benches"]);
    }

    #[test]
    fn vocabulary_min_count() {
        let corpus = vec![toks("a a a b")];
        let v = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(v.tokens(), [START_TOKEN, END_TOKEN, UNK_TOKEN, "a"]);
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.content_tokens(), ["a", "b"]);
        assert_eq!(build_vocabulary(&corpus, 0), Err(TextError::MinCount));
    }

    #[test]
    fn vocabulary_tie_break_is_lexicographic() {
        let v = build_vocabulary(&[toks("zebra apple zebra apple mango")], 1).unwrap();
        assert_eq!(v.content_tokens(), ["apple", "zebra", "mango"]);
    }

    #[test]
    fn empty_corpus_gives_reserved_only() {
        let v = build_vocabulary(&[], 5).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.encode(&["anything"]), vec![v.unk_id()]);
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let v = build_vocabulary(&[toks("x y y z z z")], 1).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }

    #[test]
    fn plural_folding() {
        let known = |s: &str| ["horse", "bus", "glass"].contains(&s);
        assert_eq!(fold_plural("horses", known), "horse");
        assert_eq!(fold_plural("buses", known), "bus");
        assert_eq!(fold_plural("glasses", known), "glass");
        assert_eq!(fold_plural("bus", known), "bus");
        assert_eq!(fold_plural("cats", known), "cats");
    }

    #[test]
    fn word_list_examples() {
        let none = StopWords::none();
        let wl = build_word_list(&[toks("horse horses horse")], 10, &none).unwrap();
        assert_eq!(wl.words(), ["horse"]);

        let stops = StopWords::default();
        let wl = build_word_list(&[toks("the the the the dog on the bench")], 10, &stops).unwrap();
        assert!(!wl.words().contains(&"the".to_string()));
        assert!(!wl.words().contains(&"on".to_string()));

        let wl = build_word_list(&[toks("dog dog cat")], 2, &none).unwrap();
        assert_eq!(wl.words(), ["dog", "cat"]);
        assert_eq!(build_word_list(&[], 0, &none), Err(TextError::TopN));
    }

    #[test]
    fn word_list_reports_both_coverages() {
        let stops = StopWords::default();
        let wl = build_word_list(&[toks("the dog dog and the cat")], 2, &stops).unwrap();
        // top-2 tokens are "dog" and the stop word "the"
        assert_eq!(wl.words(), ["dog"]);
        assert!((wl.coverage.all_tokens - 2.0 / 6.0).abs() < 1e-12);
        assert!((wl.coverage.content_tokens - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn binary_tf_examples() {
        let v = Vocabulary::from_tokens(["cat", "dog", "bird"]);
        assert_eq!(binary_tf::<&str>(&[], &v), vec![0.0; 6]);
        assert_eq!(binary_tf(&["cat", "dog"], &v)[3..], [1.0, 1.0, 0.0]);
        assert_eq!(binary_tf(&["cat", "cat"], &v), binary_tf(&["cat"], &v));
        assert_eq!(binary_tf(&["zebra"], &v), vec![0.0; 6]);
    }

    #[test]
    fn label_and_question_vectors() {
        let wl = WordList::from_words(["woman", "bench", "phone", "horse"]);
        let y = word_label_vector(&[toks("a woman sitting"), toks("on a bench")], &wl);
        assert_eq!(y, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(word_label_vector(&[toks("a cat")], &wl), vec![0.0; 4]);
        assert_eq!(word_label_vector(&[toks("two horses")], &wl)[3], 1.0);

        let q = question_word_vector(&toks("what is the woman doing"), &wl);
        assert_eq!(q, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(question_word_vector(&toks("why"), &wl), vec![0.0; 4]);
        let all: Vec<String> = wl.words().to_vec();
        assert_eq!(question_word_vector(&all, &wl), vec![1.0; 4]);
    }
}
