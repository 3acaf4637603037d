//! Sequence-level distillation: teacher forward translation of the training
//! sources, data recipes, TER-based pair filtering, student training and
//! evaluation reports.

mod plan;
mod report;
mod toy;

use std::collections::HashMap;
use std::path::PathBuf;

pub use plan::{
    run_plan, run_plan_file, run_plan_spec, run_student, DataSpec, DistillPlan, PlanData, PlanOutcome, PlanSpec,
    StudentInit,
};
pub use report::{parse_tsv, render_report, render_tsv, ReportRow};
pub use toy::{gen_toy_corpus, toy_target, toy_vocabs, ToyCorpus};

use crate::decode::{decode_corpus, DecodeConfig, Scorer, SelectionStrategy};
use crate::metrics::{sentence_bleu, ter, TerResult};
use crate::nnmodel::{load_checkpoint, ModelDims, ModelParams};
use crate::textcore::{ParallelCorpus, SentencePair};
use crate::{Error, Result};

/// Which teacher construction produces the forward translations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    /// One model, max-log-probability pick.
    Single,
    /// Probability-averaged ensemble, max-log-probability pick.
    Ensemble,
    /// Ensemble beam, candidate with the best sentence BLEU against the
    /// training reference.
    OracleBleu,
}

impl TeacherKind {
    pub fn label(&self) -> &'static str {
        match self {
            TeacherKind::Single => "single",
            TeacherKind::Ensemble => "ensemble",
            TeacherKind::OracleBleu => "oracle-bleu",
        }
    }

    pub fn parse(s: &str) -> Result<TeacherKind> {
        match s {
            "single" => Ok(TeacherKind::Single),
            "ensemble" => Ok(TeacherKind::Ensemble),
            "oracle-bleu" | "oracle" => Ok(TeacherKind::OracleBleu),
            other => Err(Error::Config(format!(
                "unknown teacher kind `{other}` (expected single, ensemble or oracle-bleu)"
            ))),
        }
    }
}

/// Teacher described by checkpoint paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    pub checkpoints: Vec<PathBuf>,
}

impl TeacherSpec {
    pub fn load(&self) -> Result<Teacher> {
        let members = self
            .checkpoints
            .iter()
            .map(|p| load_checkpoint(p).map(|c| c.params))
            .collect::<Result<Vec<_>>>()?;
        Teacher::new(self.kind, members)
    }
}

/// A loaded teacher.
#[derive(Debug, Clone)]
pub struct Teacher {
    kind: TeacherKind,
    members: Vec<ModelParams>,
}

impl Teacher {
    pub fn new(kind: TeacherKind, members: Vec<ModelParams>) -> Result<Teacher> {
        if members.is_empty() {
            return Err(Error::Config("a teacher needs at least one checkpoint".into()));
        }
        if kind == TeacherKind::Single && members.len() != 1 {
            return Err(Error::Config(format!(
                "a single teacher takes exactly one checkpoint, got {}",
                members.len()
            )));
        }
        let dims = members[0].dims();
        if members.iter().any(|m| m.dims() != dims) {
            return Err(Error::Config("teacher checkpoints disagree on model dims".into()));
        }
        Ok(Teacher { kind, members })
    }

    pub fn kind(&self) -> TeacherKind {
        self.kind
    }

    pub fn members(&self) -> &[ModelParams] {
        &self.members
    }

    pub fn dims(&self) -> ModelDims {
        self.members[0].dims()
    }

    pub fn scorer(&self) -> Scorer<'_> {
        if self.members.len() == 1 {
            Scorer::Single(&self.members[0])
        } else {
            Scorer::Ensemble(self.members.iter().collect())
        }
    }

    /// Decoder settings with the selection rule this teacher implies.
    pub fn decode_config(&self, base: &DecodeConfig) -> DecodeConfig {
        DecodeConfig {
            selection: match self.kind {
                TeacherKind::OracleBleu => SelectionStrategy::OracleBleu,
                _ => SelectionStrategy::MaxLogProb,
            },
            ..base.clone()
        }
    }
}

/// Teacher output for a training corpus.
#[derive(Debug, Clone)]
pub struct ForwardTranslation {
    /// Original sources paired with teacher translations, original pair ids.
    pub synthetic: ParallelCorpus,
    /// TER of each translation against the original reference.
    pub ter: HashMap<u64, TerResult>,
    /// Log-probability of each selected translation, by pair id.
    pub logprob: HashMap<u64, f64>,
    /// Smoothed sentence BLEU of each selected translation, by pair id.
    pub sentence_bleu: HashMap<u64, f64>,
}

impl ForwardTranslation {
    /// TSV with one line per pair in corpus order.
    pub fn ter_tsv(&self) -> String {
        let mut out = String::from("pair_id\tter\tinsertions\tdeletions\tsubstitutions\tshifts\tref_length\tlogprob\tsbleu\n");
        for p in self.synthetic.pairs() {
            let t = &self.ter[&p.id];
            out.push_str(&format!(
                "{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
                p.id,
                t.score,
                t.insertions,
                t.deletions,
                t.substitutions,
                t.shifts,
                t.ref_length,
                self.logprob[&p.id],
                self.sentence_bleu[&p.id]
            ));
        }
        out
    }
}

/// Translates every training source with the teacher and scores each
/// translation against its reference with TER.
///
/// The oracle-BLEU teacher sees each pair's reference during selection.
pub fn forward_translate_training_data(
    teacher: &Teacher,
    corpus: &ParallelCorpus,
    decode: &DecodeConfig,
    workers: usize,
) -> Result<ForwardTranslation> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot forward-translate an empty corpus".into()));
    }
    let config = teacher.decode_config(decode);
    let sources = corpus.sources();
    let refs = corpus.targets();
    let refs_arg = (config.selection == SelectionStrategy::OracleBleu).then_some(&refs[..]);
    let decoded = decode_corpus(&teacher.scorer(), &sources, &config, refs_arg, workers)?;

    let mut pairs = Vec::with_capacity(corpus.len());
    let mut ter_scores = HashMap::with_capacity(corpus.len());
    let mut logprob = HashMap::with_capacity(corpus.len());
    let mut sbleu = HashMap::with_capacity(corpus.len());
    for (orig, d) in corpus.pairs().iter().zip(decoded) {
        let best = d.best();
        if orig.target.is_empty() {
            return Err(Error::Data(format!("pair {} has an empty reference", orig.id)));
        }
        ter_scores.insert(orig.id, ter(&best.tokens, &orig.target)?);
        sbleu.insert(orig.id, sentence_bleu(&best.tokens, &orig.target)?.score);
        logprob.insert(orig.id, best.logprob);
        pairs.push(SentencePair {
            id: orig.id,
            source: orig.source.clone(),
            target: best.tokens.clone(),
        });
    }
    Ok(ForwardTranslation {
        synthetic: ParallelCorpus::new(pairs)?,
        ter: ter_scores,
        logprob,
        sentence_bleu: sbleu,
    })
}

/// Which pairs a student trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRecipe {
    /// Original sources with teacher translations.
    ForwardOnly,
    /// Original pairs plus teacher pairs (twice the data before filtering).
    ForwardPlusOriginal,
    /// Original pairs only (optionally filtered by teacher TER).
    ReferenceOnly,
}

impl DataRecipe {
    pub fn label(&self) -> &'static str {
        match self {
            DataRecipe::ForwardOnly => "forward",
            DataRecipe::ForwardPlusOriginal => "forward+original",
            DataRecipe::ReferenceOnly => "reference",
        }
    }

    pub fn parse(s: &str) -> Result<DataRecipe> {
        match s {
            "forward" => Ok(DataRecipe::ForwardOnly),
            "forward+original" => Ok(DataRecipe::ForwardPlusOriginal),
            "reference" => Ok(DataRecipe::ReferenceOnly),
            other => Err(Error::Config(format!(
                "unknown recipe `{other}` (expected forward, forward+original or reference)"
            ))),
        }
    }

    pub fn needs_teacher(&self) -> bool {
        !matches!(self, DataRecipe::ReferenceOnly)
    }
}

/// TER gate on training pairs. Pairs with TER at most the threshold stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub enabled: bool,
    pub ter_threshold: f64,
}

impl FilterSpec {
    pub const DEFAULT_THRESHOLD: f64 = 0.8;

    pub fn disabled() -> Self {
        FilterSpec {
            enabled: false,
            ter_threshold: f64::INFINITY,
        }
    }

    pub fn ter(threshold: f64) -> Self {
        FilterSpec {
            enabled: true,
            ter_threshold: threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.ter_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "TER threshold must be non-negative, got {}",
                self.ter_threshold
            )));
        }
        Ok(())
    }

    pub fn keeps(&self, ter: f64) -> bool {
        !self.enabled || ter <= self.ter_threshold
    }
}

/// Pair bookkeeping of one filtering pass over the original corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStats {
    pub kept: usize,
    pub dropped: usize,
    /// `dropped / (kept + dropped)`.
    pub dropped_fraction: f64,
}

/// Assembles a student's training corpus.
///
/// A pair dropped by the filter loses both its original and its synthetic
/// copy. `ForwardPlusOriginal` interleaves original pair `p` (new id `2p`)
/// with its translation (new id `2p + 1`); the other recipes keep ids.
pub fn build_training_set(
    original: &ParallelCorpus,
    synthetic: Option<&ParallelCorpus>,
    recipe: DataRecipe,
    filter: &FilterSpec,
    ter_scores: Option<&HashMap<u64, TerResult>>,
) -> Result<(ParallelCorpus, FilterStats)> {
    filter.validate()?;
    let synthetic_by_id: Option<HashMap<u64, &SentencePair>> =
        synthetic.map(|s| s.pairs().iter().map(|p| (p.id, p)).collect());
    if recipe.needs_teacher() && synthetic_by_id.is_none() {
        return Err(Error::Config(format!(
            "recipe `{}` needs teacher translations",
            recipe.label()
        )));
    }

    let mut out = Vec::with_capacity(original.len() * 2);
    let (mut kept, mut dropped) = (0, 0);
    for orig in original.pairs() {
        if filter.enabled {
            let t = ter_scores
                .and_then(|m| m.get(&orig.id))
                .ok_or_else(|| Error::Data(format!("no TER score for pair id {}", orig.id)))?;
            if !filter.keeps(t.score) {
                dropped += 1;
                continue;
            }
        }
        kept += 1;
        let synth = || -> Result<&SentencePair> {
            synthetic_by_id
                .as_ref()
                .and_then(|m| m.get(&orig.id).copied())
                .ok_or_else(|| Error::Data(format!("no teacher translation for pair id {}", orig.id)))
        };
        match recipe {
            DataRecipe::ReferenceOnly => out.push(orig.clone()),
            DataRecipe::ForwardOnly => out.push(synth()?.clone()),
            DataRecipe::ForwardPlusOriginal => {
                let s = synth()?;
                out.push(SentencePair {
                    id: 2 * orig.id,
                    ..orig.clone()
                });
                out.push(SentencePair {
                    id: 2 * orig.id + 1,
                    source: s.source.clone(),
                    target: s.target.clone(),
                });
            }
        }
    }
    let total = kept + dropped;
    let stats = FilterStats {
        kept,
        dropped,
        dropped_fraction: if total == 0 { 0.0 } else { dropped as f64 / total as f64 },
    };
    Ok((ParallelCorpus::new(out)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ter_of(score: f64) -> TerResult {
        TerResult {
            insertions: 0,
            deletions: 0,
            substitutions: 0,
            shifts: 0,
            ref_length: 1,
            score,
        }
    }

    fn corpora() -> (ParallelCorpus, ParallelCorpus, HashMap<u64, TerResult>) {
        let orig = ParallelCorpus::from_sentences(
            vec![vec![4], vec![5], vec![6], vec![7]],
            vec![vec![8], vec![9], vec![10], vec![11]],
        )
        .unwrap();
        let synth = ParallelCorpus::from_sentences(
            vec![vec![4], vec![5], vec![6], vec![7]],
            vec![vec![8], vec![12], vec![10], vec![13, 13]],
        )
        .unwrap();
        let ter = [(0, 0.0), (1, 0.8), (2, 0.0), (3, 2.0)]
            .into_iter()
            .map(|(id, s)| (id, ter_of(s)))
            .collect();
        (orig, synth, ter)
    }

    #[test]
    fn forward_plus_original_doubles_without_filter() {
        let (o, s, t) = corpora();
        let (c, st) = build_training_set(&o, Some(&s), DataRecipe::ForwardPlusOriginal, &FilterSpec::disabled(), Some(&t)).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!((st.kept, st.dropped), (4, 0));
        let ids: Vec<u64> = c.pairs().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(c.pairs()[3].target, vec![12]);
    }

    #[test]
    fn threshold_is_inclusive_and_drops_both_copies() {
        let (o, s, t) = corpora();
        let (c, st) = build_training_set(&o, Some(&s), DataRecipe::ForwardPlusOriginal, &FilterSpec::ter(0.8), Some(&t)).unwrap();
        assert_eq!((st.kept, st.dropped), (3, 1));
        assert_eq!(st.dropped_fraction, 0.25);
        assert_eq!(c.len(), 6);
        assert!(c.pairs().iter().all(|p| p.id / 2 != 3));
    }

    #[test]
    fn zero_threshold_keeps_exact_translations() {
        let (o, s, t) = corpora();
        let (c, _) = build_training_set(&o, Some(&s), DataRecipe::ForwardOnly, &FilterSpec::ter(0.0), Some(&t)).unwrap();
        let ids: Vec<u64> = c.pairs().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 2]);
    }

    #[test]
    fn reference_only_keeps_original_pairs() {
        let (o, _, _) = corpora();
        let (c, _) = build_training_set(&o, None, DataRecipe::ReferenceOnly, &FilterSpec::disabled(), None).unwrap();
        assert_eq!(c, o);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let (o, s, mut t) = corpora();
        t.remove(&2);
        assert!(build_training_set(&o, Some(&s), DataRecipe::ForwardOnly, &FilterSpec::ter(0.8), Some(&t)).is_err());
        assert!(build_training_set(&o, None, DataRecipe::ForwardOnly, &FilterSpec::disabled(), None).is_err());
        assert!(FilterSpec::ter(-1.0).validate().is_err());
    }

    #[test]
    fn teacher_construction_rules() {
        let d = ModelDims::new(5, 5, 2, 2).unwrap();
        let m = ModelParams::init(d, 1);
        assert!(Teacher::new(TeacherKind::Single, vec![]).is_err());
        assert!(Teacher::new(TeacherKind::Single, vec![m.clone(), m.clone()]).is_err());
        let other = ModelParams::init(ModelDims::new(5, 5, 2, 3).unwrap(), 1);
        assert!(Teacher::new(TeacherKind::Ensemble, vec![m.clone(), other]).is_err());
        let t = Teacher::new(TeacherKind::OracleBleu, vec![m]).unwrap();
        assert_eq!(
            t.decode_config(&DecodeConfig::default()).selection,
            SelectionStrategy::OracleBleu
        );
    }
}
