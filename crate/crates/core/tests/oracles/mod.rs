//! Slow reference implementations of the caption metrics, written from the
//! textbook definitions without sharing code with the library.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Sent = Vec<String>;

pub fn sent(s: &str) -> Sent {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Random sentence over a tiny alphabet so overlaps are frequent.
pub fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize) -> Sent {
    const WORDS: [&str; 6] = ["a", "dog", "cat", "on", "red", "mat"];
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_owned())
        .collect()
}

fn ngrams(s: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= s.len() {
        out.push(s[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn occurrences(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

fn distinct(list: Vec<Vec<String>>) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for g in list {
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

pub fn bleu(c: &[String], refs: &[Sent], max_n: usize) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=max_n {
        let cg = ngrams(c, n);
        if cg.is_empty() {
            return 0.0;
        }
        let mut clipped = 0;
        for g in distinct(cg.clone()) {
            let mut best = 0;
            for r in refs {
                best = best.max(occurrences(&ngrams(r, n), &g));
            }
            clipped += occurrences(&cg, &g).min(best);
        }
        product *= clipped as f64 / cg.len() as f64;
    }
    if product == 0.0 {
        return 0.0;
    }
    // closest reference length, shorter on ties
    let mut r = refs[0].len();
    for x in refs {
        let d = (x.len() as f64 - c.len() as f64).abs();
        let best = (r as f64 - c.len() as f64).abs();
        if d < best || (d == best && x.len() < r) {
            r = x.len();
        }
    }
    let bp = if c.len() < r {
        (1.0 - r as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * product.powf(1.0 / max_n as f64)
}

fn is_subsequence(sub: &[String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|t| it.any(|x| x == t))
}

/// Longest common subsequence by enumerating subsets of the candidate.
fn lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<String> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| a[i].clone())
            .collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(c: &[String], refs: &[Sent]) -> f64 {
    let mut best: f64 = 0.0;
    for r in refs {
        let l = lcs(c, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / c.len() as f64;
        let rec = l / r.len() as f64;
        let b2 = 1.2f64 * 1.2;
        best = best.max((1.0 + b2) * p * rec / (rec + b2 * p));
    }
    best
}

fn all_alignments(c: &[String], r: &[String], i: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if i == c.len() {
        out.push(cur.clone());
        return;
    }
    all_alignments(c, r, i + 1, used, cur, out);
    for j in 0..r.len() {
        if !used[j] && r[j] == c[i] {
            used[j] = true;
            cur.push((i, j));
            all_alignments(c, r, i + 1, used, cur, out);
            cur.pop();
            used[j] = false;
        }
    }
}

fn chunks(al: &[(usize, usize)]) -> usize {
    let mut n = 0;
    for (k, &(i, j)) in al.iter().enumerate() {
        if k == 0 || al[k - 1] != (i - 1, j.wrapping_sub(1)) {
            n += 1;
        }
    }
    n
}

pub fn meteor(c: &[String], refs: &[Sent]) -> f64 {
    let mut best: f64 = 0.0;
    for r in refs {
        let mut out = Vec::new();
        all_alignments(c, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut out);
        let m = out.iter().map(Vec::len).max().unwrap_or(0);
        if m == 0 {
            continue;
        }
        let ch = out
            .iter()
            .filter(|a| a.len() == m)
            .map(|a| chunks(a))
            .min()
            .unwrap();
        let (m, ch) = (m as f64, ch as f64);
        let p = m / c.len() as f64;
        let rec = m / r.len() as f64;
        let f = p * rec / (0.9 * p + 0.1 * rec);
        best = best.max(f * (1.0 - 0.5 * (ch / m).powi(3)));
    }
    best
}

/// Document frequencies over `docs`, one document per reference set.
pub fn idf(docs: &[Vec<Sent>], g: &[String]) -> f64 {
    let n = docs.len() as f64;
    let df = docs
        .iter()
        .filter(|refs| refs.iter().any(|r| ngrams(r, g.len()).iter().any(|x| x.as_slice() == g)))
        .count();
    n.ln() - (df.max(1) as f64).ln()
}

pub fn cider_d(c: &[String], refs: &[Sent], docs: &[Vec<Sent>]) -> f64 {
    cider_d_weighted(c, refs, &|g| idf(docs, g))
}

/// Dense TF-IDF vectors over the union of n-grams, then clipped cosine.
pub fn cider_d_weighted(c: &[String], refs: &[Sent], weight: &dyn Fn(&[String]) -> f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for r in refs {
        let mut per = 0.0;
        for n in 1..=4 {
            let cg = ngrams(c, n);
            let rg = ngrams(r, n);
            let mut space = cg.clone();
            space.extend(rg.clone());
            let space = distinct(space);
            let vc: Vec<f64> = space.iter().map(|g| occurrences(&cg, g) as f64 * weight(g)).collect();
            let vr: Vec<f64> = space.iter().map(|g| occurrences(&rg, g) as f64 * weight(g)).collect();
            let nc = vc.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nr = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nc == 0.0 || nr == 0.0 {
                continue;
            }
            let dot: f64 = vc.iter().zip(&vr).map(|(a, b)| a.min(*b) * b).sum();
            let d = c.len() as f64 - r.len() as f64;
            per += dot / (nc * nr) * (-d * d / 72.0).exp();
        }
        total += per / 4.0;
    }
    10.0 * total / refs.len() as f64
}
