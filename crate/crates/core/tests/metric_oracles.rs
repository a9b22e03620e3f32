mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xvqa::metrics::{
    bleu, cider_d, meteor_lite, rouge_l, sentence_scores, vqa_accuracy, IdfTable, RefLength,
    SentenceScores,
};

use oracles::{random_sentence, sent, Sent};

fn random_case(rng: &mut ChaCha8Rng) -> (Sent, Vec<Sent>) {
    let c = random_sentence(rng, 7);
    let k = rng.random_range(1..=3);
    let refs = (0..k).map(|_| random_sentence(rng, 8)).collect();
    (c, refs)
}

#[test]
fn bleu_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let (c, refs) = random_case(&mut rng);
        for n in 1..=4 {
            let a = bleu(&c, &refs, n);
            let b = oracles::bleu(&c, &refs, n);
            assert!((a - b).abs() < 1e-9, "n={n} {c:?} {refs:?}: {a} vs {b}");
        }
    }
}

#[test]
fn rouge_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let (c, refs) = random_case(&mut rng);
        let (a, b) = (rouge_l(&c, &refs), oracles::rouge_l(&c, &refs));
        assert!((a - b).abs() < 1e-9, "{c:?} {refs:?}: {a} vs {b}");
    }
}

#[test]
fn meteor_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let (c, refs) = random_case(&mut rng);
        let (a, b) = (meteor_lite(&c, &refs), oracles::meteor(&c, &refs));
        assert!((a - b).abs() < 1e-9, "{c:?} {refs:?}: {a} vs {b}");
    }
}

#[test]
fn cider_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let docs: Vec<Vec<Sent>> = (0..30).map(|_| random_case(&mut rng).1).collect();
    let idf = IdfTable::from_references(&docs);
    for refs in docs.iter().take(30) {
        let c = random_sentence(&mut rng, 7);
        let (a, b) = (cider_d(&c, refs, &idf), oracles::cider_d(&c, refs, &docs));
        assert!((a - b).abs() < 1e-9, "{c:?} {refs:?}: {a} vs {b}");
    }
}

#[test]
fn cider_short_candidate_long_reference_uniform_idf() {
    let c = sent("dog runs");
    let refs = vec![sent("a small brown dog sits on the mat")];
    let idf = IdfTable::uniform(50);
    let a = cider_d(&c, &refs, &idf);
    let b = oracles::cider_d_weighted(&c, &refs, &|_| 50f64.ln());
    assert!((a - b).abs() < 1e-12);
    // one shared unigram of 2 and 8: cos = 1/(sqrt2 sqrt8) = 0.25 at n = 1 only
    let expected = 10.0 * 0.25 * (-36.0f64 / 72.0).exp() / 4.0;
    assert!((a - expected).abs() < 1e-12);
}

#[test]
fn fused_five_token_example() {
    let c = sent("a dog sits on grass");
    let refs = vec![sent("a dog sits on the mat"), sent("the dog is on grass")];
    let docs = vec![refs.clone(), vec![sent("a red bus")], vec![sent("two cats sleep")]];
    let idf = IdfTable::from_references(&docs);
    let s = sentence_scores(&c, &refs, &idf, RefLength::Closest);
    let b: [f64; 4] = [1, 2, 3, 4].map(|n| oracles::bleu(&c, &refs, n));
    let m = oracles::meteor(&c, &refs);
    let r = oracles::rouge_l(&c, &refs);
    let cd = oracles::cider_d(&c, &refs, &docs);
    let hand = ((b[0] + b[1] + b[2] + b[3]) / 4.0 + m + r + cd / 10.0) / 4.0;
    assert!((s.accuracy - hand).abs() < 1e-12);
    assert!(s.accuracy > 0.0 && s.accuracy < 1.0);
}

#[test]
fn fusion_is_monotone_in_each_component() {
    let base = SentenceScores::fuse([0.5, 0.4, 0.3, 0.2], 0.4, 0.5, 3.0);
    assert!(SentenceScores::fuse([0.6, 0.4, 0.3, 0.2], 0.4, 0.5, 3.0).accuracy > base.accuracy);
    assert!(SentenceScores::fuse([0.5, 0.4, 0.3, 0.2], 0.5, 0.5, 3.0).accuracy > base.accuracy);
    assert!(SentenceScores::fuse([0.5, 0.4, 0.3, 0.2], 0.4, 0.6, 3.0).accuracy > base.accuracy);
    assert!(SentenceScores::fuse([0.5, 0.4, 0.3, 0.2], 0.4, 0.5, 4.0).accuracy > base.accuracy);
}

#[test]
fn consensus_accuracy_exhaustive() {
    for n in 0..=10 {
        let humans: Vec<&str> = (0..10).map(|i| if i < n { "two" } else { "three" }).collect();
        let expected = (n as f64 / 3.0).min(1.0);
        assert_eq!(vqa_accuracy("two", &humans).unwrap(), expected);
    }
}
