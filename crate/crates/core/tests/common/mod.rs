//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use nmt_distill::decode::{beam_search, next_token_distribution, DecodeConfig, Hypothesis, MaxLen, Scorer};
use nmt_distill::metrics::{edit_distance, ter};
use nmt_distill::nnmodel::{forward_probs, ModelDims, ModelParams};
use nmt_distill::textcore::{TokenId, EOS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every sequence over `alphabet` with length in `0..=max_len`.
pub fn all_sequences(alphabet: &[TokenId], max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &a in alphabet {
                let mut t: Vec<TokenId> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn move_block(words: &[TokenId], start: usize, len: usize, dest: usize) -> Vec<TokenId> {
    let mut rest = words.to_vec();
    let block: Vec<TokenId> = rest.drain(start..start + len).collect();
    rest.splice(dest..dest, block);
    rest
}

/// Every word order reachable from `words` with exactly one block move.
fn one_move(words: &[TokenId]) -> HashSet<Vec<TokenId>> {
    let mut out = HashSet::new();
    for start in 0..words.len() {
        for len in 1..=words.len() - start {
            for dest in 0..=words.len() - len {
                let moved = move_block(words, start, len, dest);
                if moved != words {
                    out.insert(moved);
                }
            }
        }
    }
    out
}

/// Fewest edits plus block moves over all move sequences of depth at most 2,
/// without any of the span restrictions the greedy search applies.
pub fn ter_bruteforce(hyp: &[TokenId], reference: &[TokenId]) -> f64 {
    let mut best = edit_distance(hyp, reference);
    let first = one_move(hyp);
    for h1 in &first {
        best = best.min(1 + edit_distance(h1, reference));
        for h2 in one_move(h1) {
            best = best.min(2 + edit_distance(&h2, reference));
        }
    }
    best as f64 / reference.len() as f64
}

/// Total log-probability of emitting `tokens` then `</s>`.
pub fn sequence_logprob(model: &ModelParams, source: &[TokenId], tokens: &[TokenId]) -> f64 {
    let dists = forward_probs(model, source, tokens).unwrap();
    let mut lp = 0.0;
    for (i, &t) in tokens.iter().enumerate() {
        lp += dists[i][t as usize].ln();
    }
    lp + dists[tokens.len()][EOS as usize].ln()
}

/// Argmax decoding (lowest id on ties) until `</s>` or `max_len` tokens.
pub fn greedy(scorer: &Scorer, source: &[TokenId], max_len: usize) -> Hypothesis {
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    loop {
        let probs = next_token_distribution(scorer, source, &tokens).unwrap();
        if tokens.len() == max_len {
            return Hypothesis {
                tokens,
                logprob: logprob + probs[EOS as usize].ln(),
                finished: false,
            };
        }
        let mut arg = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[arg] {
                arg = i;
            }
        }
        logprob += probs[arg].ln();
        if arg as TokenId == EOS {
            return Hypothesis {
                tokens,
                logprob,
                finished: true,
            };
        }
        tokens.push(arg as TokenId);
    }
}

/// All candidate outputs of length at most `max_len`, best first.
pub fn enumerate_outputs(model: &ModelParams, source: &[TokenId], max_len: usize) -> Vec<(Vec<TokenId>, f64)> {
    let vocab = model.dims().tgt_vocab as TokenId;
    let alphabet: Vec<TokenId> = (0..vocab).filter(|&t| t != EOS).collect();
    let mut out: Vec<(Vec<TokenId>, f64)> = all_sequences(&alphabet, max_len)
        .into_iter()
        .map(|s| {
            let lp = sequence_logprob(model, source, &s);
            (s, lp)
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

/// A seeded model with weights stretched far enough from zero that its
/// output distributions are peaked.
pub fn random_model(dims: ModelDims, seed: u64, stretch: f64) -> ModelParams {
    let mut m = ModelParams::init(dims, seed);
    m.scale(stretch);
    m
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Outcome of comparing greedy TER with the depth-2 brute force over every
/// hypothesis/reference pair of a 2-symbol alphabet up to length 4.
pub struct TerSweep {
    pub instances: usize,
    pub above_oracle: Vec<(Vec<TokenId>, Vec<TokenId>, f64, f64)>,
    pub below_oracle: usize,
    pub few_shift_mismatches: usize,
}

impl TerSweep {
    pub fn passes(&self) -> bool {
        self.below_oracle == 0 && self.few_shift_mismatches == 0 && self.above_oracle.len() * 100 < self.instances
    }
}

pub fn ter_sweep() -> TerSweep {
    let seqs = all_sequences(&[4, 5], 4);
    let mut sweep = TerSweep {
        instances: 0,
        above_oracle: Vec::new(),
        below_oracle: 0,
        few_shift_mismatches: 0,
    };
    for h in &seqs {
        for r in seqs.iter().filter(|r| !r.is_empty()) {
            sweep.instances += 1;
            let got = ter(h, r).unwrap();
            let oracle = ter_bruteforce(h, r);
            if got.score > oracle + 1e-12 {
                sweep.above_oracle.push((h.clone(), r.clone(), got.score, oracle));
                if got.shifts <= 1 {
                    sweep.few_shift_mismatches += 1;
                }
            } else if got.score < oracle - 1e-12 {
                sweep.below_oracle += 1;
            }
        }
    }
    sweep
}

pub fn random_source(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<TokenId> {
    let len = rng.gen_range(1..5);
    (0..len).map(|_| rng.gen_range(0..vocab as TokenId)).collect()
}

pub fn fixed(beam: usize, max_len: usize) -> DecodeConfig {
    DecodeConfig {
        beam_size: beam,
        max_len: MaxLen::Fixed(max_len),
        ..DecodeConfig::default()
    }
}

/// Beam size 1 against [`greedy`] on `models` random models.
pub fn check_beam_one_is_greedy(models: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..models {
        let dims = ModelDims::new(6, rng.gen_range(3..8), 3, 4).unwrap();
        let m = random_model(dims, seed, 25.0);
        let src = random_source(&mut rng, dims.src_vocab);
        let scorer = Scorer::Single(&m);
        let beam = beam_search(&scorer, &src, &fixed(1, 6)).unwrap();
        let g = greedy(&scorer, &src, 6);
        if beam.len() != 1
            || beam[0].tokens != g.tokens
            || beam[0].finished != g.finished
            || (beam[0].logprob - g.logprob).abs() >= 1e-12
        {
            return Err(format!("seed {seed}: beam {:?} vs greedy {g:?}", beam.first()));
        }
    }
    Ok(())
}

/// A beam as wide as the output space against full enumeration, for
/// target vocabularies of 3 and 4 and max lengths 1 to 3.
pub fn check_wide_beam_is_exhaustive() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..40 {
        let vocab = 3 + (seed as usize % 2);
        let max_len = 1 + (seed as usize % 3);
        let dims = ModelDims::new(5, vocab, 2, 3).unwrap();
        let m = random_model(dims, 1000 + seed, 20.0);
        let src = random_source(&mut rng, dims.src_vocab);
        let all = enumerate_outputs(&m, &src, max_len);
        let got = beam_search(&Scorer::Single(&m), &src, &fixed(all.len(), max_len)).unwrap();
        if got.len() != all.len() {
            return Err(format!("seed {seed}: {} candidates, expected {}", got.len(), all.len()));
        }
        for (h, (tokens, lp)) in got.iter().zip(&all) {
            if &h.tokens != tokens || (h.logprob - lp).abs() >= 1e-12 || h.finished != (tokens.len() < max_len) {
                return Err(format!("seed {seed}: {h:?} vs {tokens:?} at {lp}"));
            }
        }
    }
    Ok(())
}

/// Ensembles of one model and of three copies against the model alone.
pub fn check_ensemble_of_copies() -> Result<(), String> {
    let dims = ModelDims::new(7, 9, 4, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..10 {
        let m = random_model(dims, seed, 10.0);
        let src = random_source(&mut rng, 7);
        let cfg = fixed(4, 8);
        let single = beam_search(&Scorer::Single(&m), &src, &cfg).unwrap();
        for members in [vec![&m], vec![&m, &m, &m]] {
            let n = members.len();
            let ens = beam_search(&Scorer::ensemble(members).unwrap(), &src, &cfg).unwrap();
            let same = ens.len() == single.len()
                && ens
                    .iter()
                    .zip(&single)
                    .all(|(a, b)| a.tokens == b.tokens && (a.logprob - b.logprob).abs() < 1e-12);
            if !same {
                return Err(format!("seed {seed}: ensemble of {n} differs from the single model"));
            }
        }
    }
    Ok(())
}
