//! Translation metrics on token ids: add-one smoothed sentence BLEU, corpus
//! BLEU-4 and TER with block shifts.

use std::collections::HashMap;

use crate::textcore::TokenId;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Longest hypothesis span a TER shift may move.
pub const MAX_SHIFT_SPAN: usize = 10;

/// Counts of every contiguous `n`-gram in `sentence`.
pub fn ngram_counts(sentence: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    if n == 0 || sentence.len() < n {
        return counts;
    }
    for gram in sentence.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and hypothesis n-gram totals for orders 1..=4.
fn match_stats(hyp: &[TokenId], reference: &[TokenId]) -> ([usize; MAX_ORDER], [usize; MAX_ORDER]) {
    let mut matched = [0; MAX_ORDER];
    let mut total = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts = ngram_counts(reference, n);
        total[n - 1] = hyp.len().saturating_sub(n - 1);
        matched[n - 1] = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    (matched, total)
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// Evidence behind one smoothed sentence-BLEU score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceBleuBreakdown {
    pub matched: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub bp: f64,
    pub score: f64,
}

/// Sentence BLEU with one added to matched and total counts at every order.
///
/// Orders the hypothesis is too short for contribute a factor of 1. An empty
/// hypothesis scores 0.
pub fn sentence_bleu(hyp: &[TokenId], reference: &[TokenId]) -> Result<SentenceBleuBreakdown> {
    if reference.is_empty() {
        return Err(Error::Data("sentence BLEU needs a non-empty reference".into()));
    }
    let (matched, total) = match_stats(hyp, reference);
    let bp = brevity_penalty(hyp.len(), reference.len());
    let score = if hyp.is_empty() {
        0.0
    } else {
        let log_prec: f64 = matched
            .iter()
            .zip(&total)
            .map(|(&m, &t)| ((m + 1) as f64 / (t + 1) as f64).ln())
            .sum();
        bp * (log_prec / MAX_ORDER as f64).exp()
    };
    Ok(SentenceBleuBreakdown {
        matched,
        total,
        bp,
        score,
    })
}

/// Micro-aggregated BLEU-4 statistics over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorpusBleuStats {
    pub matched: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
    pub score: f64,
}

impl CorpusBleuStats {
    /// Score in table points (100 x score).
    pub fn points(&self) -> f64 {
        100.0 * self.score
    }

    fn finish(mut self) -> Self {
        self.score = if self.matched.iter().any(|&m| m == 0) {
            0.0
        } else {
            let log_prec: f64 = self
                .matched
                .iter()
                .zip(&self.total)
                .map(|(&m, &t)| (m as f64 / t as f64).ln())
                .sum();
            brevity_penalty(self.hyp_len, self.ref_len) * (log_prec / MAX_ORDER as f64).exp()
        };
        self
    }
}

/// Standard unsmoothed corpus BLEU-4.
pub fn corpus_bleu<H, R>(hyps: &[H], refs: &[R]) -> Result<CorpusBleuStats>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "hypothesis and reference counts".into(),
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if refs.iter().all(|r| r.as_ref().is_empty()) {
        return Err(Error::Data("corpus BLEU needs at least one non-empty reference".into()));
    }
    let mut stats = CorpusBleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (h.as_ref(), r.as_ref());
        let (m, t) = match_stats(h, r);
        for n in 0..MAX_ORDER {
            stats.matched[n] += m[n];
            stats.total[n] += t[n];
        }
        stats.hyp_len += h.len();
        stats.ref_len += r.len();
    }
    Ok(stats.finish())
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Insertions, deletions and substitutions of one minimal alignment of
/// `hyp` onto `reference`. Ties prefer the diagonal, then deletion.
fn edit_trace(hyp: &[TokenId], reference: &[TokenId]) -> (usize, usize, usize) {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let (mut ins, mut del, mut sub) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(hyp[i - 1] != reference[j - 1]);
            if d[(i - 1) * w + j - 1] + diff == here {
                sub += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    (ins, del, sub)
}

/// Edit trace behind one TER score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerResult {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub shifts: usize,
    pub ref_length: usize,
    pub score: f64,
}

impl TerResult {
    pub fn edits(&self) -> usize {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }
}

/// A block move: `len` hypothesis words starting at `start` are removed and
/// re-inserted so they begin at index `dest` of the remaining words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Shift {
    pub start: usize,
    pub len: usize,
    pub dest: usize,
}

impl Shift {
    pub fn apply(&self, words: &[TokenId]) -> Vec<TokenId> {
        let span = &words[self.start..self.start + self.len];
        let mut rest: Vec<TokenId> = Vec::with_capacity(words.len());
        rest.extend_from_slice(&words[..self.start]);
        rest.extend_from_slice(&words[self.start + self.len..]);
        let mut out = Vec::with_capacity(words.len());
        out.extend_from_slice(&rest[..self.dest]);
        out.extend_from_slice(span);
        out.extend_from_slice(&rest[self.dest..]);
        out
    }
}

fn occurs_in(span: &[TokenId], reference: &[TokenId]) -> bool {
    span.len() <= reference.len() && reference.windows(span.len()).any(|w| w == span)
}

/// Best single shift of `hyp` by edit-distance reduction, if any reduces it.
///
/// Only spans of at most [`MAX_SHIFT_SPAN`] words that also occur verbatim
/// in the reference are moved, and a span that already sits at the position
/// of a matching reference span is left alone. Every destination is tried.
/// Ties go to the smaller start, then the shorter span, then the smaller
/// destination.
fn best_shift(hyp: &[TokenId], reference: &[TokenId], current: usize) -> Option<(Shift, usize)> {
    let mut best: Option<(Shift, usize)> = None;
    for start in 0..hyp.len() {
        for len in 1..=MAX_SHIFT_SPAN.min(hyp.len() - start) {
            let span = &hyp[start..start + len];
            if !occurs_in(span, reference) {
                break;
            }
            if reference.get(start..start + len) == Some(span) {
                continue;
            }
            let remaining = hyp.len() - len;
            for dest in 0..=remaining {
                if dest == start {
                    continue;
                }
                let shift = Shift { start, len, dest };
                let dist = edit_distance(&shift.apply(hyp), reference);
                if dist < current && best.map_or(true, |(_, d)| dist < d) {
                    best = Some((shift, dist));
                }
            }
        }
    }
    best
}

/// Translation edit rate with greedy block shifts.
///
/// Repeatedly applies the shift that most reduces the word-level edit
/// distance to the reference, counting one edit per shift, until no shift
/// helps. The score is `(edits + shifts) / |reference|`.
pub fn ter(hyp: &[TokenId], reference: &[TokenId]) -> Result<TerResult> {
    if reference.is_empty() {
        return Err(Error::Data("TER needs a non-empty reference".into()));
    }
    let mut current = hyp.to_vec();
    let mut dist = edit_distance(&current, reference);
    let mut shifts = 0;
    while dist > 0 {
        match best_shift(&current, reference, dist) {
            Some((shift, d)) => {
                current = shift.apply(&current);
                dist = d;
                shifts += 1;
            }
            None => break,
        }
    }
    let (insertions, deletions, substitutions) = edit_trace(&current, reference);
    debug_assert_eq!(insertions + deletions + substitutions, dist);
    let edits = dist + shifts;
    Ok(TerResult {
        insertions,
        deletions,
        substitutions,
        shifts,
        ref_length: reference.len(),
        score: edits as f64 / reference.len() as f64,
    })
}

/// Corpus TER: total edits over total reference length.
pub fn corpus_ter<H, R>(hyps: &[H], refs: &[R]) -> Result<f64>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "hypothesis and reference counts".into(),
            left: hyps.len(),
            right: refs.len(),
        });
    }
    let (mut edits, mut words) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let t = ter(h.as_ref(), r.as_ref())?;
        edits += t.edits();
        words += t.ref_length;
    }
    if words == 0 {
        return Err(Error::Data("corpus TER needs at least one reference".into()));
    }
    Ok(edits as f64 / words as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| w.as_bytes()[0] as TokenId)
            .collect()
    }

    #[test]
    fn ngram_counts_examples() {
        let aba = s("a b a");
        let uni = ngram_counts(&aba, 1);
        assert_eq!(uni[&s("a")[..]], 2);
        assert_eq!(uni[&s("b")[..]], 1);
        let tri = ngram_counts(&aba, 3);
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[&aba[..]], 1);
        assert!(ngram_counts(&s("a b"), 4).is_empty());
    }

    #[test]
    fn sentence_bleu_identical_is_one() {
        let x = s("a b c d e");
        assert_eq!(sentence_bleu(&x, &x).unwrap().score, 1.0);
    }

    #[test]
    fn sentence_bleu_hand_examples() {
        let b = sentence_bleu(&s("a b c"), &s("x y z")).unwrap();
        assert_eq!(b.matched, [0, 0, 0, 0]);
        assert_eq!(b.total, [3, 2, 1, 0]);
        assert!((b.score - (1.0f64 / 24.0).powf(0.25)).abs() < 1e-12);

        let b = sentence_bleu(&s("a b c d"), &s("a b c e")).unwrap();
        assert_eq!(b.matched, [3, 2, 1, 0]);
        assert_eq!(b.total, [4, 3, 2, 1]);
        assert!((b.score - 0.2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn sentence_bleu_edge_cases() {
        assert!(sentence_bleu(&s("a"), &[]).is_err());
        assert_eq!(sentence_bleu(&[], &s("a b")).unwrap().score, 0.0);
        // short hypothesis: bp = exp(1 - 4/2)
        let b = sentence_bleu(&s("a b"), &s("a b c d")).unwrap();
        assert!((b.bp - (-1.0f64).exp()).abs() < 1e-15);
        assert!(b.score > 0.0 && b.score < 1.0);
    }

    #[test]
    fn corpus_bleu_examples() {
        let refs = vec![s("a b c d e"), s("b c d e f")];
        assert_eq!(corpus_bleu(&refs, &refs).unwrap().score, 1.0);

        let zero = corpus_bleu(&[s("a b c e d")], &[s("a b c d e")]).unwrap();
        assert_eq!(zero.matched[3], 0);
        assert_eq!(zero.score, 0.0);

        assert!(corpus_bleu(&[s("a")], &[s("a"), s("b")]).is_err());
        assert!(corpus_bleu(&[s("a")], &[Vec::<TokenId>::new()]).is_err());
    }

    #[test]
    fn corpus_bleu_aggregates_counts() {
        // segment 1: hyp "a b c d e" vs ref "a b c d f" -> m=(4,3,2,1) t=(5,4,3,2)
        // segment 2: hyp "a b c d" vs ref "a b c d e e" -> m=(4,3,2,1) t=(4,3,2,1)
        // sums: m=(8,6,4,2) t=(9,7,5,3), c=9, r=11
        let hyps = vec![s("a b c d e"), s("a b c d")];
        let refs = vec![s("a b c d f"), s("a b c d e e")];
        let st = corpus_bleu(&hyps, &refs).unwrap();
        assert_eq!(st.matched, [8, 6, 4, 2]);
        assert_eq!(st.total, [9, 7, 5, 3]);
        assert_eq!((st.hyp_len, st.ref_len), (9, 11));
        let prec = (8.0 / 9.0) * (6.0 / 7.0) * (4.0 / 5.0) * (2.0 / 3.0f64);
        let expected = (1.0 - 11.0 / 9.0f64).exp() * prec.powf(0.25);
        assert!((st.score - expected).abs() < 1e-12);
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&s("a b c"), &s("a b c")), 0);
        assert_eq!(edit_distance(&s("a b"), &[]), 2);
        assert_eq!(edit_distance(&s("a b c"), &s("a c b")), 2);
    }

    #[test]
    fn ter_examples() {
        let x = s("a b c d");
        let r = ter(&x, &x).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.edits(), 0);

        let r = ter(&s("a b c e"), &s("a b c d")).unwrap();
        assert_eq!((r.substitutions, r.shifts), (1, 0));
        assert_eq!(r.score, 0.25);

        let r = ter(&s("d a b c"), &s("a b c d")).unwrap();
        assert_eq!(r.shifts, 1);
        assert_eq!(r.insertions + r.deletions + r.substitutions, 0);
        assert_eq!(r.score, 0.25);

        assert!(ter(&x, &[]).is_err());
        let r = ter(&[], &s("a b")).unwrap();
        assert_eq!((r.insertions, r.score), (2, 1.0));
    }

    #[test]
    fn shift_apply_moves_block() {
        let sh = Shift { start: 0, len: 1, dest: 3 };
        assert_eq!(sh.apply(&s("d a b c")), s("a b c d"));
        let sh = Shift { start: 2, len: 2, dest: 0 };
        assert_eq!(sh.apply(&s("c d a b")), s("a b c d"));
    }

    #[test]
    fn corpus_ter_pools_edits() {
        let hyps = [s("a b c e"), s("x")];
        let refs = [s("a b c d"), s("y z")];
        // one substitution, then one substitution and one insertion, over 6 words
        assert_eq!(corpus_ter(&hyps, &refs).unwrap(), 3.0 / 6.0);
        assert!(corpus_ter(&hyps[..1], &refs).is_err());
    }
}
