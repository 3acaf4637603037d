//! Command-line frontend. Every pipeline stage is one subcommand; data goes
//! to files or stdout, diagnostics to stderr.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bpe::{apply_bpe_line, learn_bpe, learn_bpe_pair, undo_bpe_line, MergeTable};
use crate::decode::{translate_corpus, DecodeConfig, MaxLen, Scorer, SelectionStrategy};
use crate::distill::{
    build_training_set, gen_toy_corpus, parse_tsv, render_report, render_tsv, run_plan_file, toy_vocabs,
    DataRecipe, FilterSpec,
};
use crate::metrics::{corpus_bleu, corpus_ter, sentence_bleu, ter};
use crate::nnmodel::{load_checkpoint, save_checkpoint, train_from, ModelDims, TrainConfig};
use crate::textcore::{
    read_lines, read_parallel, token_counts, write_lines, write_parallel, ParallelCorpus, Vocab, RESERVED_TOKENS,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "nmt-distill", version, about = "Sequence-level knowledge distillation for NMT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn BPE merges from one or two training sides.
    BpeLearn(BpeLearnArgs),
    /// Segment (or restore) a text file with learned merges.
    BpeApply(BpeApplyArgs),
    /// Build a frequency-ordered vocabulary file.
    BuildVocab(BuildVocabArgs),
    /// Train a model on a parallel corpus.
    Train(TrainArgs),
    /// Beam-search translate with one model or an ensemble.
    Translate(TranslateArgs),
    /// Sentence-level and corpus scores of hypotheses against references.
    Score(ScoreArgs),
    /// Drop pairs whose teacher translation has high TER.
    Filter(FilterArgs),
    /// Write a synthetic toy corpus.
    GenToy(GenToyArgs),
    /// Run a distillation plan file.
    DistillRun(DistillRunArgs),
    /// Merge report rows into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BpeLearnArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: Option<PathBuf>,
    #[arg(long)]
    merges: usize,
    /// Learn one table over both sides (requires --tgt).
    #[arg(long)]
    joint: bool,
    /// Merge table output (source side when learning separate tables).
    #[arg(long)]
    output: PathBuf,
    /// Target-side merge table when learning separate tables.
    #[arg(long)]
    tgt_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BpeApplyArgs {
    #[arg(long)]
    codes: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Join `@@` pieces back into words instead of segmenting.
    #[arg(long)]
    undo: bool,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 40_000)]
    max_size: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct VocabArgs {
    #[arg(long)]
    src_vocab: PathBuf,
    #[arg(long)]
    tgt_vocab: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    val_src: PathBuf,
    #[arg(long)]
    val_tgt: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Hidden layer size.
    #[arg(long, default_value_t = 64)]
    hlayer: usize,
    /// Word embedding size.
    #[arg(long, default_value_t = 32)]
    wemb: usize,
    #[arg(long)]
    seed: u64,
    /// `scratch` or `continue:PATH`.
    #[arg(long, default_value = "scratch")]
    init: String,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    max_epochs: u64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    patience: u64,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Receives `model.ckpt` and `history.tsv`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    /// Checkpoint; repeat for a probability-averaged ensemble.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// References for oracle sentence-BLEU selection of the final candidate.
    #[arg(long)]
    oracle_ref: Option<PathBuf>,
    /// Output length limit is `ceil(factor * source length) + 5`.
    #[arg(long, default_value_t = 2.0)]
    max_len_factor: f64,
    /// Pick by log-probability per emitted token.
    #[arg(long)]
    length_normalize: bool,
    /// Optional TSV with the log-probability (and sentence BLEU when
    /// references are given) of every output line.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    Bleu,
    Ter,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// TSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Teacher translations of --src, line-aligned.
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = FilterSpec::DEFAULT_THRESHOLD)]
    ter_threshold: f64,
    /// `forward`, `forward+original` or `reference`.
    #[arg(long, default_value = "reference")]
    recipe: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Receives `toy.src`, `toy.tgt`, `toy.noise`, `src.vocab`, `tgt.vocab`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DistillRunArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the plan's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report TSV files to merge, in order.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Merged TSV; the aligned table goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::BpeLearn(a) => bpe_learn(a),
        Command::BpeApply(a) => bpe_apply(a),
        Command::BuildVocab(a) => {
            let vocab = Vocab::build(&read_lines(&a.input)?, a.max_size)?;
            vocab.save(&a.output)?;
            eprintln!("vocabulary of {} entries", vocab.len());
            Ok(())
        }
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Score(a) => score(a),
        Command::Filter(a) => filter(a),
        Command::GenToy(a) => gen_toy(a),
        Command::DistillRun(a) => {
            let outcome = run_plan_file(&a.plan, &a.out_dir, a.workers)?;
            eprint!("{}", render_report(std::slice::from_ref(&outcome.row)));
            Ok(())
        }
        Command::Report(a) => {
            let mut rows = Vec::new();
            for p in &a.input {
                rows.extend(parse_tsv(&crate::textcore::read_utf8(p)?)?);
            }
            if let Some(out) = &a.output {
                write_file(out, &render_tsv(&rows))?;
            }
            print!("{}", render_report(&rows));
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn bpe_learn(a: BpeLearnArgs) -> Result<()> {
    let src = read_lines(&a.src)?;
    match (&a.tgt, a.joint) {
        (None, true) => Err(Error::Config("--joint needs --tgt".into())),
        (None, false) => learn_bpe(&src, a.merges)?.save(&a.output),
        (Some(tgt), joint) => {
            let tgt = read_lines(tgt)?;
            let (s, t) = learn_bpe_pair(&src, &tgt, a.merges, joint)?;
            s.save(&a.output)?;
            match (&a.tgt_output, joint) {
                (_, true) => Ok(()),
                (Some(p), false) => t.save(p),
                (None, false) => Err(Error::Config("separate tables need --tgt-output".into())),
            }
        }
    }
}

fn bpe_apply(a: BpeApplyArgs) -> Result<()> {
    let lines = read_lines(&a.input)?;
    let out: Vec<String> = if a.undo {
        lines.iter().map(|l| undo_bpe_line(l)).collect::<Result<_>>()?
    } else {
        let codes = a
            .codes
            .as_ref()
            .ok_or_else(|| Error::Config("--codes is required unless --undo is given".into()))?;
        let table = MergeTable::load(codes)?;
        lines.iter().map(|l| apply_bpe_line(l, &table)).collect()
    };
    write_lines(&a.output, &out)
}

fn train(a: TrainArgs) -> Result<()> {
    let sv = Vocab::load(&a.vocab.src_vocab)?;
    let tv = Vocab::load(&a.vocab.tgt_vocab)?;
    let train_set = read_parallel(&a.src, &a.tgt, &sv, &tv)?;
    let val = read_parallel(&a.val_src, &a.val_tgt, &sv, &tv)?;
    let dims = ModelDims::new(sv.len(), tv.len(), a.wemb, a.hlayer)?;
    let init = match a.init.as_str() {
        "scratch" => None,
        other => {
            let path = other.strip_prefix("continue:").ok_or_else(|| {
                Error::Config(format!("--init must be `scratch` or `continue:PATH`, got `{other}`"))
            })?;
            let ck = load_checkpoint(Path::new(path))?;
            ck.ensure_dims(&dims)?;
            Some(ck.params)
        }
    };
    let config = TrainConfig {
        batch_size: a.batch_size,
        initial_lr: a.lr,
        patience: a.patience,
        max_epochs: a.max_epochs,
        seed: a.seed,
        clip_norm: a.clip_norm,
        validation_decode: DecodeConfig {
            beam_size: a.beam,
            ..DecodeConfig::default()
        },
        workers: a.workers,
        ..TrainConfig::default()
    };
    let outcome = train_from(&config, init, &train_set, &val, dims)?;
    create_dir(&a.out_dir)?;
    save_checkpoint(&outcome.checkpoint, &a.out_dir.join("model.ckpt"))?;
    write_file(&a.out_dir.join("history.tsv"), &outcome.history_tsv())?;
    eprintln!(
        "trained {} epochs, best epoch {} (validation {:.4})",
        outcome.history.len(),
        outcome.checkpoint.meta.epoch,
        outcome.checkpoint.meta.best_score.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let sv = Vocab::load(&a.vocab.src_vocab)?;
    let tv = Vocab::load(&a.vocab.tgt_vocab)?;
    let members = a
        .model
        .iter()
        .map(|p| load_checkpoint(p).map(|c| c.params))
        .collect::<Result<Vec<_>>>()?;
    let scorer = if members.len() == 1 {
        Scorer::Single(&members[0])
    } else {
        Scorer::ensemble(members.iter().collect())?
    };
    let dims = scorer.dims();
    if dims.src_vocab != sv.len() || dims.tgt_vocab != tv.len() {
        return Err(Error::Config(format!(
            "vocabulary sizes {}/{} do not match the model's {}/{}",
            sv.len(),
            tv.len(),
            dims.src_vocab,
            dims.tgt_vocab
        )));
    }
    eprintln!("ensemble of {} member(s)", members.len());
    let sources: Vec<_> = read_lines(&a.input)?.iter().map(|l| sv.encode_line(l)).collect();
    let refs = match &a.oracle_ref {
        Some(p) => Some(read_lines(p)?.iter().map(|l| tv.encode_line(l)).collect::<Vec<_>>()),
        None => None,
    };
    let config = DecodeConfig {
        beam_size: a.beam,
        selection: if refs.is_some() {
            SelectionStrategy::OracleBleu
        } else {
            SelectionStrategy::MaxLogProb
        },
        max_len: MaxLen::Relative {
            factor: a.max_len_factor,
            offset: 5,
        },
        length_normalize: a.length_normalize,
    };
    let hyps = translate_corpus(&scorer, &sources, &config, refs.as_deref(), a.workers)?;
    let lines = hyps
        .iter()
        .map(|h| tv.decode_line(&h.tokens))
        .collect::<Result<Vec<_>>>()?;
    write_lines(&a.output, &lines)?;
    if let Some(path) = &a.scores {
        let mut tsv = vec![String::from("line\tlogprob\tsbleu")];
        for (i, h) in hyps.iter().enumerate() {
            let sbleu = match &refs {
                Some(r) if !r[i].is_empty() => format!("{:.6}", sentence_bleu(&h.tokens, &r[i])?.score),
                _ => "NA".to_string(),
            };
            tsv.push(format!("{}\t{:.6}\t{}", i, h.logprob, sbleu));
        }
        write_lines(path, &tsv)?;
    }
    Ok(())
}

/// Maps whitespace tokens to ids through one shared table, so any text
/// can be scored without a vocabulary file.
fn intern(lines: &[String], table: &mut std::collections::HashMap<String, u32>) -> Vec<Vec<u32>> {
    lines
        .iter()
        .map(|l| {
            l.split_whitespace()
                .map(|w| {
                    let next = table.len() as u32;
                    *table.entry(w.to_string()).or_insert(next)
                })
                .collect()
        })
        .collect()
}

fn score(a: ScoreArgs) -> Result<()> {
    let hyp_lines = read_lines(&a.hyp)?;
    let ref_lines = read_lines(&a.reference)?;
    if hyp_lines.len() != ref_lines.len() {
        return Err(Error::LengthMismatch {
            what: "hypothesis and reference line counts".into(),
            left: hyp_lines.len(),
            right: ref_lines.len(),
        });
    }
    let mut table = std::collections::HashMap::new();
    let hyps = intern(&hyp_lines, &mut table);
    let refs = intern(&ref_lines, &mut table);
    let mut out = String::new();
    match a.metric {
        Metric::Bleu => {
            out.push_str("line\tsbleu\tbp\tmatched\ttotal\n");
            for (i, (h, r)) in hyps.iter().zip(&refs).enumerate() {
                let b = sentence_bleu(h, r)?;
                let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                out.push_str(&format!(
                    "{}\t{:.6}\t{:.6}\t{}\t{}\n",
                    i + 1,
                    b.score,
                    b.bp,
                    join(&b.matched),
                    join(&b.total)
                ));
            }
            out.push_str(&format!("# corpus_bleu\t{:.2}\n", corpus_bleu(&hyps, &refs)?.points()));
        }
        Metric::Ter => {
            out.push_str("line\tter\tinsertions\tdeletions\tsubstitutions\tshifts\tref_length\n");
            for (i, (h, r)) in hyps.iter().zip(&refs).enumerate() {
                let t = ter(h, r)?;
                out.push_str(&format!(
                    "{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\n",
                    i + 1,
                    t.score,
                    t.insertions,
                    t.deletions,
                    t.substitutions,
                    t.shifts,
                    t.ref_length
                ));
            }
            out.push_str(&format!("# corpus_ter\t{:.2}\n", 100.0 * corpus_ter(&hyps, &refs)?));
        }
    }
    match &a.output {
        Some(p) => write_file(p, &out),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn filter(a: FilterArgs) -> Result<()> {
    let src = read_lines(&a.src)?;
    let tgt = read_lines(&a.tgt)?;
    let hyp = read_lines(&a.hyp)?;
    if src.len() != tgt.len() || src.len() != hyp.len() {
        return Err(Error::Data(format!(
            "line counts differ: src {}, tgt {}, hyp {}",
            src.len(),
            tgt.len(),
            hyp.len()
        )));
    }
    let recipe = DataRecipe::parse(&a.recipe)?;
    let spec = FilterSpec::ter(a.ter_threshold);
    spec.validate()?;

    // The vocabularies only carry tokens through the recipe; nothing is <unk>.
    let sv = closed_vocab(&src)?;
    let tv = closed_vocab(&[tgt.as_slice(), hyp.as_slice()].concat())?;
    let enc = |v: &Vocab, lines: &[String]| lines.iter().map(|l| v.encode_line(l)).collect::<Vec<_>>();
    let original = ParallelCorpus::from_sentences(enc(&sv, &src), enc(&tv, &tgt))?;
    let synthetic = ParallelCorpus::from_sentences(enc(&sv, &src), enc(&tv, &hyp))?;

    let mut scores = std::collections::HashMap::new();
    let mut tsv = String::from("pair_id\tter\tkept\n");
    for (o, s) in original.pairs().iter().zip(synthetic.pairs()) {
        if o.target.is_empty() {
            return Err(Error::Data(format!("line {} has an empty reference", o.id + 1)));
        }
        let t = ter(&s.target, &o.target)?;
        tsv.push_str(&format!("{}\t{:.6}\t{}\n", o.id, t.score, u8::from(spec.keeps(t.score))));
        scores.insert(o.id, t);
    }
    let (kept, stats) = build_training_set(&original, Some(&synthetic), recipe, &spec, Some(&scores))?;
    create_dir(&a.out_dir)?;
    write_parallel(&kept, &a.out_dir.join("filtered.src"), &a.out_dir.join("filtered.tgt"), &sv, &tv)?;
    write_file(&a.out_dir.join("ter.tsv"), &tsv)?;
    eprintln!(
        "kept {} of {} pairs ({:.2}% dropped)",
        stats.kept,
        stats.kept + stats.dropped,
        100.0 * stats.dropped_fraction
    );
    Ok(())
}

fn closed_vocab(lines: &[String]) -> Result<Vocab> {
    Vocab::from_tokens(
        token_counts(lines)
            .into_keys()
            .filter(|t| !RESERVED_TOKENS.contains(&t.as_str())),
    )
}

fn gen_toy(a: GenToyArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(Error::Config(format!("--noise {} is outside [0, 1]", a.noise)));
    }
    let toy = gen_toy_corpus(a.seed, a.size, a.noise);
    let (sv, tv) = toy_vocabs();
    create_dir(&a.out_dir)?;
    write_parallel(&toy.corpus, &a.out_dir.join("toy.src"), &a.out_dir.join("toy.tgt"), &sv, &tv)?;
    let labels: Vec<&str> = toy.noisy.iter().map(|&n| if n { "1" } else { "0" }).collect();
    write_lines(&a.out_dir.join("toy.noise"), &labels)?;
    sv.save(&a.out_dir.join("src.vocab"))?;
    tv.save(&a.out_dir.join("tgt.vocab"))
}
