//! Byte-pair-encoding sub-words.
//!
//! Words start as character sequences; learning repeatedly merges the most
//! frequent adjacent symbol pair inside words. Segmented output marks every
//! non-final sub-word of a word with the `@@` continuation suffix. Words that
//! themselves end in `@@` cannot be restored unambiguously.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::textcore::read_utf8;
use crate::{Error, Result};

pub const CONTINUATION: &str = "@@";
const HEADER: &str = "#version:1";

/// Learned merges in priority order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Result<MergeTable> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, m) in merges.iter().enumerate() {
            if ranks.insert(m.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate merge `{} {}`", m.0, m.1)));
            }
        }
        Ok(MergeTable { merges, ranks })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Serializes as a `#version:1` header followed by one `left right` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MergeTable> {
        let mut lines = text.lines();
        match lines.next() {
            Some(HEADER) => {}
            other => {
                return Err(Error::Data(format!(
                    "merge table must start with `{HEADER}`, found {other:?}"
                )))
            }
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(Error::Data(format!(
                        "merge table line {}: expected `left right`, found {line:?}",
                        i + 2
                    )))
                }
            }
        }
        MergeTable::new(merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MergeTable> {
        MergeTable::from_text(&read_utf8(path)?)
    }
}

/// Learns up to `num_merges` merges from a whitespace-tokenized corpus.
///
/// Stops early once no adjacent pair occurs at least twice. Frequency ties
/// go to the lexicographically smallest `(left, right)`.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> Result<MergeTable> {
    if corpus.iter().all(|l| l.as_ref().split_whitespace().next().is_none()) {
        return Err(Error::Config("cannot learn BPE merges from an empty corpus".into()));
    }
    // Sorted word map keeps the learning loop independent of line order.
    let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *word_freq.entry(w).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = word_freq
        .into_iter()
        .map(|(w, f)| (w.chars().map(String::from).collect(), f))
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pair_freq: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, f) in &words {
            for p in syms.windows(2) {
                *pair_freq.entry((p[0].as_str(), p[1].as_str())).or_default() += f;
            }
        }
        let best = pair_freq
            .into_iter()
            .filter(|&(_, f)| f >= 2)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((l, r), _)) = best else { break };
        let (l, r) = (l.to_string(), r.to_string());
        for (syms, _) in &mut words {
            merge_in_place(syms, &l, &r);
        }
        merges.push((l, r));
    }
    MergeTable::new(merges)
}

/// Learns one table per side, or a single table over both sides when `joint`.
pub fn learn_bpe_pair<S: AsRef<str>>(
    source: &[S],
    target: &[S],
    num_merges: usize,
    joint: bool,
) -> Result<(MergeTable, MergeTable)> {
    if joint {
        let both: Vec<&str> = source
            .iter()
            .chain(target)
            .map(AsRef::as_ref)
            .collect();
        let t = learn_bpe(&both, num_merges)?;
        Ok((t.clone(), t))
    } else {
        Ok((learn_bpe(source, num_merges)?, learn_bpe(target, num_merges)?))
    }
}

fn merge_in_place(syms: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == left && syms[i + 1] == right {
            let r = syms.remove(i + 1);
            syms[i].push_str(&r);
        }
        i += 1;
    }
}

/// Splits one word into sub-word symbols (without continuation markers).
pub fn segment_word(word: &str, table: &MergeTable) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    loop {
        let best = syms
            .windows(2)
            .filter_map(|p| table.ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, p)))
            .min_by_key(|&(r, _)| r)
            .map(|(_, p)| (p[0].clone(), p[1].clone()));
        match best {
            Some((l, r)) => merge_in_place(&mut syms, &l, &r),
            None => return syms,
        }
    }
}

/// Segments every word of a sentence, marking non-final pieces with `@@`.
pub fn apply_bpe<S: AsRef<str>>(sentence: &[S], table: &MergeTable) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence {
        let pieces = segment_word(word.as_ref(), table);
        let last = pieces.len().saturating_sub(1);
        for (i, mut p) in pieces.into_iter().enumerate() {
            if i < last {
                p.push_str(CONTINUATION);
            }
            out.push(p);
        }
    }
    out
}

pub fn apply_bpe_line(line: &str, table: &MergeTable) -> String {
    let words: Vec<&str> = line.split_whitespace().collect();
    apply_bpe(&words, table).join(" ")
}

/// Joins `@@`-marked pieces back into words.
pub fn undo_bpe<S: AsRef<str>>(subwords: &[S]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut pending = String::new();
    for piece in subwords {
        let piece = piece.as_ref();
        match piece.strip_suffix(CONTINUATION) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(piece);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() || subwords.last().is_some_and(|p| p.as_ref().ends_with(CONTINUATION)) {
        return Err(Error::Data("dangling `@@` continuation at end of sentence".into()));
    }
    Ok(out)
}

pub fn undo_bpe_line(line: &str) -> Result<String> {
    let pieces: Vec<&str> = line.split_whitespace().collect();
    Ok(undo_bpe(&pieces)?.join(" "))
}
