//! Beam search over single models and probability-averaged ensembles, with
//! max-log-probability or oracle sentence-BLEU selection from the final
//! candidate list.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::metrics::sentence_bleu;
use crate::nnmodel::{EncodedSource, ModelDims, ModelParams};
use crate::textcore::{Sentence, TokenId, BOS, EOS};
use crate::{Error, Result};

/// A finished (or force-finished) translation candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Target ids without `<s>` and `</s>`.
    pub tokens: Sentence,
    /// Sum of natural-log step probabilities, including the final `</s>`.
    pub logprob: f64,
    /// `false` when the hypothesis was closed at the length limit rather
    /// than by the model choosing `</s>`.
    pub finished: bool,
}

/// Upper bound on the number of generated tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxLen {
    Fixed(usize),
    /// `ceil(factor * |source|) + offset`.
    Relative { factor: f64, offset: usize },
}

impl MaxLen {
    pub fn resolve(&self, source_len: usize) -> usize {
        match *self {
            MaxLen::Fixed(n) => n,
            MaxLen::Relative { factor, offset } => (factor * source_len as f64).ceil() as usize + offset,
        }
    }
}

impl Default for MaxLen {
    fn default() -> Self {
        MaxLen::Relative {
            factor: 2.0,
            offset: 5,
        }
    }
}

/// How the final hypothesis is chosen from the beam's candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionStrategy {
    #[default]
    MaxLogProb,
    /// Highest smoothed sentence BLEU against the reference.
    OracleBleu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_len: MaxLen,
    pub selection: SelectionStrategy,
    /// Compare log-probabilities divided by output length (off by default).
    pub length_normalize: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 5,
            max_len: MaxLen::default(),
            selection: SelectionStrategy::MaxLogProb,
            length_normalize: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if let MaxLen::Fixed(0) = self.max_len {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if let MaxLen::Relative { factor, .. } = self.max_len {
            if !(factor >= 0.0) {
                return Err(Error::Config("max_len factor must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// A single model or an ensemble whose members' next-token probabilities
/// are averaged at every step.
#[derive(Debug, Clone)]
pub enum Scorer<'a> {
    Single(&'a ModelParams),
    Ensemble(Vec<&'a ModelParams>),
}

/// Per-member encoder outputs for one source sentence.
pub struct SourceContext {
    encoded: Vec<EncodedSource>,
}

/// Per-member decoder states for one partial hypothesis.
pub type ScorerState = Vec<Vec<f64>>;

impl<'a> Scorer<'a> {
    /// Builds an ensemble scorer; all members must share identical dims.
    pub fn ensemble(members: Vec<&'a ModelParams>) -> Result<Scorer<'a>> {
        let first = members
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?
            .dims();
        if let Some(bad) = members.iter().find(|m| m.dims() != first) {
            return Err(Error::Config(format!(
                "ensemble members disagree on dims: {first:?} vs {:?}",
                bad.dims()
            )));
        }
        Ok(Scorer::Ensemble(members))
    }

    pub fn members(&self) -> &[&'a ModelParams] {
        match self {
            Scorer::Single(m) => std::slice::from_ref(m),
            Scorer::Ensemble(ms) => ms,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.members()[0].dims()
    }

    pub fn prepare(&self, source: &[TokenId]) -> Result<SourceContext> {
        let encoded = self
            .members()
            .iter()
            .map(|m| m.encode(source))
            .collect::<Result<_>>()?;
        Ok(SourceContext { encoded })
    }

    pub fn initial_state(&self, ctx: &SourceContext) -> ScorerState {
        ctx.encoded.iter().map(EncodedSource::initial_state).collect()
    }

    /// Mean of the members' next-token distributions and their new states.
    pub fn step(&self, ctx: &SourceContext, state: &ScorerState, prev: TokenId) -> Result<(Vec<f64>, ScorerState)> {
        let members = self.members();
        if members.len() == 1 {
            let (p, s) = members[0].step(&ctx.encoded[0], &state[0], prev)?;
            return Ok((p, vec![s]));
        }
        let mut mean = vec![0.0; self.dims().tgt_vocab];
        let mut next = Vec::with_capacity(members.len());
        for ((m, enc), st) in members.iter().zip(&ctx.encoded).zip(state) {
            let (p, s) = m.step(enc, st, prev)?;
            for (acc, x) in mean.iter_mut().zip(&p) {
                *acc += x;
            }
            next.push(s);
        }
        let k = members.len() as f64;
        mean.iter_mut().for_each(|x| *x /= k);
        Ok((mean, next))
    }
}

/// Distribution over the next target token after `<s> prefix`.
pub fn next_token_distribution(scorer: &Scorer, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
    let ctx = scorer.prepare(source)?;
    let mut state = scorer.initial_state(&ctx);
    let mut prev = BOS;
    for &t in prefix {
        state = scorer.step(&ctx, &state, prev)?.1;
        prev = t;
    }
    Ok(scorer.step(&ctx, &state, prev)?.0)
}

fn by_logprob_then_tokens(a_lp: f64, a: &[TokenId], b_lp: f64, b: &[TokenId]) -> Ordering {
    b_lp.partial_cmp(&a_lp).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
}

struct LiveHyp {
    tokens: Sentence,
    logprob: f64,
    state: ScorerState,
}

/// Left-to-right beam search returning the final candidate list, best first.
///
/// Every live hypothesis is expanded with the full target vocabulary and
/// the expansions are ranked by cumulative log-probability (ties: smaller
/// token sequence first). Walking that ranking, `</s>` expansions join the
/// finished list and the rest refill the live beam up to `beam_size`. The
/// search stops once `beam_size` hypotheses have finished; at the length
/// limit the remaining live hypotheses are closed with the model's `</s>`
/// probability.
pub fn beam_search(scorer: &Scorer, source: &[TokenId], config: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    config.validate()?;
    let beam = config.beam_size;
    let max_len = config.max_len.resolve(source.len()).max(1);
    let ctx = scorer.prepare(source)?;
    let vocab = scorer.dims().tgt_vocab;

    let mut live = vec![LiveHyp {
        tokens: Vec::new(),
        logprob: 0.0,
        state: scorer.initial_state(&ctx),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut expansions: Vec<(f64, usize, TokenId)> = Vec::with_capacity(live.len() * vocab);
        let mut next_states = Vec::with_capacity(live.len());
        for (i, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (probs, state) = scorer.step(&ctx, &hyp.state, prev)?;
            for (tok, p) in probs.iter().enumerate() {
                expansions.push((hyp.logprob + p.ln(), i, tok as TokenId));
            }
            next_states.push(state);
        }
        expansions.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| {
                let (ta, tb) = (&live[a.1].tokens, &live[b.1].tokens);
                ta.iter()
                    .chain(std::iter::once(&a.2))
                    .cmp(tb.iter().chain(std::iter::once(&b.2)))
            })
        });

        let mut next_live = Vec::with_capacity(beam);
        for (lp, parent, tok) in expansions {
            if next_live.len() == beam {
                break;
            }
            if tok == EOS {
                if finished.len() < beam {
                    finished.push(Hypothesis {
                        tokens: live[parent].tokens.clone(),
                        logprob: lp,
                        finished: true,
                    });
                }
            } else {
                let mut tokens = live[parent].tokens.clone();
                tokens.push(tok);
                next_live.push(LiveHyp {
                    tokens,
                    logprob: lp,
                    state: next_states[parent].clone(),
                });
            }
        }
        live = next_live;
        if finished.len() >= beam || live.is_empty() {
            live.clear();
            break;
        }
    }

    for hyp in live {
        let prev = hyp.tokens.last().copied().unwrap_or(BOS);
        let (probs, _) = scorer.step(&ctx, &hyp.state, prev)?;
        finished.push(Hypothesis {
            logprob: hyp.logprob + probs[EOS as usize].ln(),
            tokens: hyp.tokens,
            finished: false,
        });
    }
    finished.sort_by(|a, b| by_logprob_then_tokens(a.logprob, &a.tokens, b.logprob, &b.tokens));
    finished.truncate(beam);
    Ok(finished)
}

/// Selection rule applied to a final candidate list.
#[derive(Debug, Clone, Copy)]
pub enum Selection<'r> {
    MaxLogProb,
    /// Log-probability divided by the number of emitted tokens (incl. `</s>`).
    MaxNormalizedLogProb,
    OracleBleu(&'r [TokenId]),
}

fn normalized(h: &Hypothesis) -> f64 {
    h.logprob / (h.tokens.len() + 1) as f64
}

/// Picks the final hypothesis.
///
/// Oracle selection maximizes smoothed sentence BLEU against the reference,
/// breaking ties by higher log-probability and then the smaller token
/// sequence.
pub fn select_final<'c>(candidates: &'c [Hypothesis], selection: Selection) -> Result<&'c Hypothesis> {
    if candidates.is_empty() {
        return Err(Error::Data("cannot select from an empty candidate list".into()));
    }
    let best = match selection {
        Selection::MaxLogProb => candidates
            .iter()
            .min_by(|a, b| by_logprob_then_tokens(a.logprob, &a.tokens, b.logprob, &b.tokens)),
        Selection::MaxNormalizedLogProb => candidates
            .iter()
            .min_by(|a, b| by_logprob_then_tokens(normalized(a), &a.tokens, normalized(b), &b.tokens)),
        Selection::OracleBleu(reference) => {
            let scored = candidates
                .iter()
                .map(|h| Ok((sentence_bleu(&h.tokens, reference)?.score, h)))
                .collect::<Result<Vec<_>>>()?;
            scored
                .into_iter()
                .min_by(|(sa, a), (sb, b)| {
                    sb.partial_cmp(sa)
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| by_logprob_then_tokens(a.logprob, &a.tokens, b.logprob, &b.tokens))
                })
                .map(|(_, h)| h)
        }
    };
    Ok(best.expect("non-empty candidates"))
}

fn selection_for<'r>(config: &DecodeConfig, reference: Option<&'r [TokenId]>) -> Result<Selection<'r>> {
    Ok(match config.selection {
        SelectionStrategy::OracleBleu => Selection::OracleBleu(
            reference.ok_or_else(|| Error::Config("oracle BLEU selection needs references".into()))?,
        ),
        SelectionStrategy::MaxLogProb if config.length_normalize => Selection::MaxNormalizedLogProb,
        SelectionStrategy::MaxLogProb => Selection::MaxLogProb,
    })
}

/// Beam candidates and the selected hypothesis for one source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSentence {
    pub candidates: Vec<Hypothesis>,
    pub chosen: usize,
}

impl DecodedSentence {
    pub fn best(&self) -> &Hypothesis {
        &self.candidates[self.chosen]
    }
}

fn run_parallel<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Decodes every source independently, keeping the candidate lists.
///
/// Output order follows input order for any worker count.
pub fn decode_corpus<S: AsRef<[TokenId]> + Sync>(
    scorer: &Scorer,
    sources: &[S],
    config: &DecodeConfig,
    refs: Option<&[S]>,
    workers: usize,
) -> Result<Vec<DecodedSentence>> {
    config.validate()?;
    if let Some(refs) = refs {
        if refs.len() != sources.len() {
            return Err(Error::LengthMismatch {
                what: "sources and oracle references".into(),
                left: sources.len(),
                right: refs.len(),
            });
        }
    } else if config.selection == SelectionStrategy::OracleBleu {
        return Err(Error::Config("oracle BLEU selection needs references".into()));
    }
    run_parallel(sources.len(), workers, |i| {
        let candidates = beam_search(scorer, sources[i].as_ref(), config)?;
        let reference = refs.map(|r| r[i].as_ref());
        let chosen_hyp = select_final(&candidates, selection_for(config, reference)?)?;
        let chosen = candidates
            .iter()
            .position(|h| std::ptr::eq(h, chosen_hyp))
            .expect("selected from candidates");
        Ok(DecodedSentence { candidates, chosen })
    })
}

/// Translates a corpus: beam search plus final selection per sentence.
pub fn translate_corpus<S: AsRef<[TokenId]> + Sync>(
    scorer: &Scorer,
    sources: &[S],
    config: &DecodeConfig,
    refs: Option<&[S]>,
    workers: usize,
) -> Result<Vec<Hypothesis>> {
    Ok(decode_corpus(scorer, sources, config, refs, workers)?
        .into_iter()
        .map(|mut d| d.candidates.swap_remove(d.chosen))
        .collect())
}
