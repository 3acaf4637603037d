//! Token-id text representation, vocabularies, parallel corpora and the
//! per-epoch shuffle used by training.
//!
//! Tokenization at this layer is whitespace only. Sub-word segmentation is
//! handled by [`crate::bpe`] before text reaches a [`Vocab`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

pub type TokenId = u32;

/// A tokenized sentence without `<s>`/`</s>` framing.
pub type Sentence = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Bijective token <-> id map with the four reserved tokens at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    max_size: usize,
}

impl Vocab {
    /// Builds a vocabulary from whitespace-tokenized lines.
    ///
    /// Keeps the `max_size - 4` most frequent tokens; equal frequencies are
    /// ordered lexicographically so the result does not depend on line order.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocab> {
        if max_size < RESERVED_TOKENS.len() + 1 {
            return Err(Error::Config(format!(
                "vocabulary max_size must be at least 5, got {max_size}"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for line in corpus {
            for tok in line.as_ref().split_whitespace() {
                if RESERVED_TOKENS.contains(&tok) {
                    continue;
                }
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Config(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED_TOKENS.len());
        Ok(Self::from_tokens_unchecked(
            ranked.into_iter().map(|(t, _)| t.to_string()),
            max_size,
        ))
    }

    /// Vocabulary with the reserved tokens followed by `tokens` in order.
    ///
    /// Duplicates and reserved names in `tokens` are rejected.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for t in &tokens {
            if RESERVED_TOKENS.contains(&t.as_str()) || !seen.insert(t.as_str()) {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!("invalid vocabulary token {t:?}")));
            }
        }
        let size = tokens.len() + RESERVED_TOKENS.len();
        Ok(Self::from_tokens_unchecked(tokens, size))
    }

    fn from_tokens_unchecked<I: IntoIterator<Item = String>>(tokens: I, max_size: usize) -> Vocab {
        let mut all: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab {
            tokens: all,
            index,
            max_size,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order, reserved tokens included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids; unknown tokens become `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Whitespace-tokenizes `line` and encodes it.
    pub fn encode_line(&self, line: &str) -> Sentence {
        line.split_whitespace()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, sentence: &[TokenId]) -> Result<Vec<String>> {
        sentence
            .iter()
            .map(|&id| {
                self.token(id).map(str::to_string).ok_or_else(|| {
                    Error::Corruption(format!(
                        "token id {id} out of range for vocabulary of size {}",
                        self.len()
                    ))
                })
            })
            .collect()
    }

    pub fn decode_line(&self, sentence: &[TokenId]) -> Result<String> {
        Ok(self.decode(sentence)?.join(" "))
    }

    /// Writes one token per line in id order, reserved tokens first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = read_utf8(path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED_TOKENS.len() || lines[..4] != RESERVED_TOKENS {
            return Err(Error::Data(format!(
                "{}: vocabulary file must start with the reserved tokens",
                path.display()
            )));
        }
        Vocab::from_tokens(lines[4..].iter().copied())
    }
}

/// One aligned sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: u64,
    pub source: Sentence,
    pub target: Sentence,
}

/// Aligned source/target sentences with unique pair ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>) -> Result<ParallelCorpus> {
        let mut ids = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !ids.insert(p.id) {
                return Err(Error::Data(format!("duplicate pair id {}", p.id)));
            }
        }
        Ok(ParallelCorpus { pairs })
    }

    /// Pairs `sources[i]` with `targets[i]` under pair id `i`.
    pub fn from_sentences(sources: Vec<Sentence>, targets: Vec<Sentence>) -> Result<ParallelCorpus> {
        if sources.len() != targets.len() {
            return Err(Error::LengthMismatch {
                what: "source and target sentence counts".into(),
                left: sources.len(),
                right: targets.len(),
            });
        }
        let pairs = sources
            .into_iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (source, target))| SentencePair {
                id: i as u64,
                source,
                target,
            })
            .collect();
        Ok(ParallelCorpus { pairs })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<SentencePair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.target.clone()).collect()
    }

    /// Checks every id against the vocabulary sizes.
    pub fn validate(&self, src_vocab: usize, tgt_vocab: usize) -> Result<()> {
        for p in &self.pairs {
            for (side, sent, limit) in [("source", &p.source, src_vocab), ("target", &p.target, tgt_vocab)] {
                if let Some(&bad) = sent.iter().find(|&&t| t as usize >= limit) {
                    return Err(Error::Corruption(format!(
                        "pair {}: {side} token id {bad} out of range for vocabulary of size {limit}",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Token-string view of a parallel corpus, one entry per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextCorpus {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl TextCorpus {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn encode(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> ParallelCorpus {
        let sources = self.source.iter().map(|l| src_vocab.encode_line(l)).collect();
        let targets = self.target.iter().map(|l| tgt_vocab.encode_line(l)).collect();
        ParallelCorpus::from_sentences(sources, targets).expect("text corpus sides are aligned")
    }
}

pub(crate) fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        let valid = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Data(format!("{}: invalid UTF-8 on line {line}", path.display()))
    })
}

/// Reads a text file as whitespace-normalized lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = read_utf8(path)?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect())
}

/// Writes lines with LF endings.
pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut buf = Vec::new();
    for l in lines {
        buf.extend_from_slice(l.as_ref().as_bytes());
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads two positionally aligned files; pair `i` comes from line `i`.
pub fn read_parallel_text(source_path: &Path, target_path: &Path) -> Result<TextCorpus> {
    let source = read_lines(source_path)?;
    let target = read_lines(target_path)?;
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: format!(
                "line counts of {} and {}",
                source_path.display(),
                target_path.display()
            ),
            left: source.len(),
            right: target.len(),
        });
    }
    Ok(TextCorpus { source, target })
}

/// Reads an aligned file pair and encodes it with the given vocabularies.
pub fn read_parallel(
    source_path: &Path,
    target_path: &Path,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<ParallelCorpus> {
    Ok(read_parallel_text(source_path, target_path)?.encode(src_vocab, tgt_vocab))
}

/// Writes a corpus as two aligned text files.
pub fn write_parallel(
    corpus: &ParallelCorpus,
    source_path: &Path,
    target_path: &Path,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<()> {
    let mut src = Vec::with_capacity(corpus.len());
    let mut tgt = Vec::with_capacity(corpus.len());
    for p in corpus.pairs() {
        src.push(src_vocab.decode_line(&p.source)?);
        tgt.push(tgt_vocab.decode_line(&p.target)?);
    }
    write_lines(source_path, &src)?;
    write_lines(target_path, &tgt)
}

/// Key for the shuffle generator: seed in bytes 0..8, epoch in 8..16.
fn shuffle_key(seed: u64, epoch: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key
}

/// Permutation of `0..n` for one training epoch.
///
/// A ChaCha20 stream keyed by `(seed, epoch)` drives a Fisher-Yates shuffle,
/// so any epoch's order can be regenerated without replaying earlier ones.
pub fn shuffle_order(n: usize, epoch: u64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::from_seed(shuffle_key(seed, epoch));
    order.shuffle(&mut rng);
    order
}

/// Token frequencies of a whitespace-tokenized corpus, sorted by token.
pub fn token_counts<S: AsRef<str>>(corpus: &[S]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for line in corpus {
        for tok in line.as_ref().split_whitespace() {
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_orders_by_frequency() {
        let v = Vocab::build(&["a a b"], 6).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<s>", "</s>", "<unk>", "a", "b"]);
    }

    #[test]
    fn build_breaks_ties_lexicographically() {
        let v = Vocab::build(&["b a"], 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), None);
        assert_eq!(v.encode(&["b", "a"]), vec![UNK, 4]);
    }

    #[test]
    fn build_rejects_small_cap_and_empty_corpus() {
        assert!(matches!(Vocab::build(&["a"], 4), Err(Error::Config(_))));
        let empty: [&str; 0] = [];
        assert!(matches!(Vocab::build(&empty, 10), Err(Error::Config(_))));
        assert!(matches!(Vocab::build(&["  "], 10), Err(Error::Config(_))));
    }

    #[test]
    fn build_is_line_order_independent() {
        let a = Vocab::build(&["x y z z", "y q", "q q r"], 7).unwrap();
        let b = Vocab::build(&["q q r", "x y z z", "y q"], 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encode_unknown_and_decode_bounds() {
        let v = Vocab::build(&["a b"], 10).unwrap();
        let ids = v.encode_line("a zzz");
        assert_eq!(ids, vec![v.id("a").unwrap(), UNK]);
        let s = v.encode_line("b a b");
        assert_eq!(v.decode_line(&s).unwrap(), "b a b");
        assert!(matches!(v.decode(&[9999]), Err(Error::Corruption(_))));
    }

    #[test]
    fn read_parallel_assigns_line_ids() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.txt");
        let t = dir.path().join("t.txt");
        fs::write(&s, "a b\nb\na a\n").unwrap();
        fs::write(&t, "x\ny y\nx y\n").unwrap();
        let text = read_parallel_text(&s, &t).unwrap();
        let sv = Vocab::build(&text.source, 10).unwrap();
        let tv = Vocab::build(&text.target, 10).unwrap();
        let c = read_parallel(&s, &t, &sv, &tv).unwrap();
        let ids: Vec<u64> = c.pairs().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);

        fs::write(&t, "x\ny\nz\nw\n").unwrap();
        match read_parallel_text(&s, &t) {
            Err(Error::LengthMismatch { left: 3, right: 4, .. }) => {}
            other => panic!("expected mismatch, got {other:?}"),
        }

        fs::write(&s, "").unwrap();
        fs::write(&t, "").unwrap();
        assert!(read_parallel_text(&s, &t).unwrap().is_empty());
    }

    #[test]
    fn invalid_utf8_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.txt");
        fs::write(&s, b"ok\nalso ok\nbad \xff byte\n").unwrap();
        let err = read_lines(&s).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn corpus_rejects_duplicate_ids() {
        let p = SentencePair {
            id: 7,
            source: vec![4],
            target: vec![4],
        };
        assert!(ParallelCorpus::new(vec![p.clone(), p]).is_err());
    }

    #[test]
    fn shuffle_small_and_deterministic() {
        assert_eq!(shuffle_order(1, 3, 9), vec![0]);
        assert!(shuffle_order(0, 1, 1).is_empty());
        assert_eq!(shuffle_order(40, 2, 5), shuffle_order(40, 2, 5));
    }

    #[test]
    fn shuffle_differs_between_epochs() {
        let e1 = shuffle_order(52, 1, 1234);
        let e2 = shuffle_order(52, 2, 1234);
        assert_ne!(e1, e2);
        assert_eq!(e1[..12], [30, 11, 19, 51, 36, 29, 44, 35, 33, 13, 21, 23]);
        assert_eq!(e2[..12], [9, 48, 21, 20, 47, 44, 31, 16, 7, 26, 13, 46]);
        let mut sorted = e1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..52).collect::<Vec<_>>());
    }
}
