use std::collections::HashMap;

fn ngram_counts<S: AsRef<str>>(words: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if words.len() >= n {
        for w in words.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the number of candidate n-grams.
pub fn modified_precision<S: AsRef<str>, R: AsRef<str>>(
    candidate: &[S],
    reference: &[R],
    n: usize,
) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let total = cand.values().sum();
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Sentence BLEU-4 with add-one smoothing of zero match counts for n ≥ 2.
///
/// Unigram precision is not smoothed, so candidates sharing no word with the
/// reference score 0. Orders for which the candidate has no n-grams count as
/// precision 1. Empty inputs score 0.
pub fn smoothed_bleu4<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], reference: &[R]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, t) = modified_precision(candidate, reference, n);
        let p = if n == 1 {
            m as f64 / t as f64
        } else if m == 0 {
            1.0 / (t as f64 + 1.0)
        } else {
            m as f64 / t as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let bp = (1.0 - reference.len() as f64 / candidate.len() as f64)
        .exp()
        .min(1.0);
    bp * (log_sum / 4.0).exp()
}
