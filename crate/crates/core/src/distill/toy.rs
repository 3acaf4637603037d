//! Synthetic transduction task standing in for a real parallel corpus.
//!
//! Sources are 2..=8 symbols over a 10-letter alphabet. The clean target
//! maps every symbol through a fixed permutation and then swaps each
//! adjacent pair starting at an even index, so the decoder has to attend
//! out of order. A noisy pair gets an unrelated, independently drawn target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::textcore::{ParallelCorpus, Sentence, TokenId, Vocab, RESERVED_TOKENS};

pub const ALPHABET: usize = 10;
pub const MIN_LEN: usize = 2;
pub const MAX_LEN: usize = 8;

const FIRST_SYMBOL: TokenId = RESERVED_TOKENS.len() as TokenId;

/// Source vocabulary `a..j` and target vocabulary `A..J`, ids 4..14.
pub fn toy_vocabs() -> (Vocab, Vocab) {
    let src = (b'a'..b'a' + ALPHABET as u8).map(|c| (c as char).to_string());
    let tgt = (b'A'..b'A' + ALPHABET as u8).map(|c| (c as char).to_string());
    (
        Vocab::from_tokens(src).expect("distinct symbols"),
        Vocab::from_tokens(tgt).expect("distinct symbols"),
    )
}

fn map_symbol(src: TokenId) -> TokenId {
    let i = src - FIRST_SYMBOL;
    FIRST_SYMBOL + (3 * i + 7) % ALPHABET as TokenId
}

/// The clean target for `source`.
pub fn toy_target(source: &[TokenId]) -> Sentence {
    let mut out: Sentence = source.iter().map(|&t| map_symbol(t)).collect();
    let mut k = 0;
    while k + 1 < out.len() {
        out.swap(k, k + 1);
        k += 2;
    }
    out
}

fn random_sentence(rng: &mut ChaCha20Rng) -> Sentence {
    let len = rng.gen_range(MIN_LEN..=MAX_LEN);
    (0..len)
        .map(|_| FIRST_SYMBOL + rng.gen_range(0..ALPHABET as TokenId))
        .collect()
}

/// A generated corpus and which of its pairs were corrupted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyCorpus {
    pub corpus: ParallelCorpus,
    pub noisy: Vec<bool>,
}

/// Generates `size` pairs; each target is replaced by random symbols with
/// probability `noise_rate`.
pub fn gen_toy_corpus(seed: u64, size: usize, noise_rate: f64) -> ToyCorpus {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise_rate = noise_rate.clamp(0.0, 1.0);
    let mut sources = Vec::with_capacity(size);
    let mut targets = Vec::with_capacity(size);
    let mut noisy = Vec::with_capacity(size);
    for _ in 0..size {
        let source = random_sentence(&mut rng);
        let is_noisy = rng.gen_bool(noise_rate);
        let target = if is_noisy {
            random_sentence(&mut rng)
        } else {
            toy_target(&source)
        };
        sources.push(source);
        targets.push(target);
        noisy.push(is_noisy);
    }
    ToyCorpus {
        corpus: ParallelCorpus::from_sentences(sources, targets).expect("aligned"),
        noisy,
    }
}
