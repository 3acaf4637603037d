//! One distillation experiment: teacher forward translation, training-set
//! assembly, student training and evaluation, plus the plan-file frontend
//! that writes every intermediate artifact to an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::report::{render_tsv, ReportRow};
use super::{
    build_training_set, forward_translate_training_data, gen_toy_corpus, toy_vocabs, DataRecipe, FilterSpec,
    FilterStats, ForwardTranslation, Teacher, TeacherKind,
};
use crate::decode::{translate_corpus, DecodeConfig, Scorer};
use crate::metrics::{corpus_bleu, corpus_ter};
use crate::nnmodel::{
    load_checkpoint, save_checkpoint, train_from, ModelDims, ModelParams, TrainConfig, TrainOutcome,
};
use crate::textcore::{read_lines, read_parallel, write_lines, write_parallel, ParallelCorpus, Sentence, Vocab};
use crate::{Error, Result};

/// How the student's parameters start.
#[derive(Debug, Clone)]
pub enum StudentInit {
    Scratch,
    /// Continue from a trained baseline with the student's dims.
    ContinueFrom(ModelParams),
}

impl StudentInit {
    pub fn label(&self) -> &'static str {
        match self {
            StudentInit::Scratch => "scratch",
            StudentInit::ContinueFrom(_) => "continue",
        }
    }
}

/// Train, validation and test corpora of one experiment.
#[derive(Debug, Clone)]
pub struct PlanData {
    pub train: ParallelCorpus,
    pub validation: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct DistillPlan {
    pub name: String,
    pub teacher: Option<Teacher>,
    pub recipe: DataRecipe,
    pub filter: FilterSpec,
    pub student_dims: ModelDims,
    pub init: StudentInit,
    /// Student training; its `seed` seeds initialization and shuffling.
    pub train: TrainConfig,
    /// Teacher decoding and student evaluation.
    pub decode: DecodeConfig,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub row: ReportRow,
    pub forward: Option<ForwardTranslation>,
    pub training_set: ParallelCorpus,
    pub filter_stats: FilterStats,
    pub student: TrainOutcome,
    pub validation_hyps: Vec<Sentence>,
    pub test_hyps: Vec<Sentence>,
}

impl DistillPlan {
    fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.student_dims.validate()?;
        self.decode.validate()?;
        if (self.recipe.needs_teacher() || self.filter.enabled) && self.teacher.is_none() {
            return Err(Error::Config(format!(
                "plan `{}` needs a teacher for recipe `{}`{}",
                self.name,
                self.recipe.label(),
                if self.filter.enabled { " with TER filtering" } else { "" }
            )));
        }
        if let StudentInit::ContinueFrom(p) = &self.init {
            if p.dims() != self.student_dims {
                return Err(Error::Config(format!(
                    "baseline dims {:?} do not match student dims {:?}",
                    p.dims(),
                    self.student_dims
                )));
            }
        }
        Ok(())
    }

    fn parallel_data_label(&self) -> String {
        let mut label = match (&self.teacher, self.recipe) {
            (Some(t), r) if r.needs_teacher() => format!("{} ({})", r.label(), t.kind().label()),
            (_, r) => r.label().to_string(),
        };
        if self.filter.enabled {
            label.push_str(&format!(", TER<={}", self.filter.ter_threshold));
        }
        label
    }
}

/// Runs forward translation (when the plan needs it), then the student.
pub fn run_plan(plan: &DistillPlan, data: &PlanData) -> Result<PlanOutcome> {
    plan.validate()?;
    let forward = match &plan.teacher {
        Some(t) if plan.recipe.needs_teacher() || plan.filter.enabled => Some(forward_translate_training_data(
            t,
            &data.train,
            &plan.decode,
            plan.workers,
        )?),
        _ => None,
    };
    run_student(plan, data, forward)
}

/// Trains and evaluates the student on already computed teacher output.
///
/// Lets several plans share one forward translation of the same corpus.
pub fn run_student(plan: &DistillPlan, data: &PlanData, forward: Option<ForwardTranslation>) -> Result<PlanOutcome> {
    plan.validate()?;
    if (plan.recipe.needs_teacher() || plan.filter.enabled) && forward.is_none() {
        return Err(Error::Config(format!("plan `{}` needs teacher translations", plan.name)));
    }
    let (training_set, filter_stats) = build_training_set(
        &data.train,
        forward.as_ref().map(|f| &f.synthetic),
        plan.recipe,
        &plan.filter,
        forward.as_ref().map(|f| &f.ter),
    )?;
    if training_set.is_empty() {
        return Err(Error::Data(format!(
            "plan `{}`: the TER filter dropped all {} pairs",
            plan.name, filter_stats.dropped
        )));
    }
    let config = TrainConfig {
        validation_decode: plan.decode.clone(),
        workers: plan.workers,
        ..plan.train.clone()
    };
    let init = match &plan.init {
        StudentInit::Scratch => None,
        StudentInit::ContinueFrom(p) => Some(p.clone()),
    };
    let student = train_from(&config, init, &training_set, &data.validation, plan.student_dims)?;

    let params = &student.checkpoint.params;
    let evaluate = |corpus: &ParallelCorpus| -> Result<(Vec<Sentence>, f64, f64)> {
        let hyps: Vec<Sentence> = translate_corpus(&Scorer::Single(params), &corpus.sources(), &plan.decode, None, plan.workers)?
            .into_iter()
            .map(|h| h.tokens)
            .collect();
        let refs = corpus.targets();
        let bleu = corpus_bleu(&hyps, &refs)?.points();
        let ter = 100.0 * corpus_ter(&hyps, &refs)?;
        Ok((hyps, bleu, ter))
    };
    let (validation_hyps, val_bleu, val_ter) = evaluate(&data.validation)?;
    let (test_hyps, test_bleu, test_ter) = evaluate(&data.test)?;

    let row = ReportRow {
        setup: plan.name.clone(),
        parallel_data: plan.parallel_data_label(),
        init: plan.init.label().to_string(),
        train_pairs: training_set.len(),
        epochs: student.history.len() as u64,
        val_bleu,
        val_ter,
        test_bleu,
        test_ter,
    };
    Ok(PlanOutcome {
        row,
        forward,
        training_set,
        filter_stats,
        student,
        validation_hyps,
        test_hyps,
    })
}

// ---------------------------------------------------------------------------
// Plan files

/// Plan file contents (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub name: String,
    pub data: DataSpec,
    #[serde(default)]
    pub teacher: Option<TeacherSection>,
    pub student: StudentSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub decode: DecodeSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    Toy {
        #[serde(default = "toy_defaults::train_seed")]
        seed: u64,
        #[serde(default = "toy_defaults::train_size")]
        size: usize,
        #[serde(default)]
        noise_rate: f64,
        #[serde(default = "toy_defaults::val_seed")]
        val_seed: u64,
        #[serde(default = "toy_defaults::eval_size")]
        val_size: usize,
        #[serde(default = "toy_defaults::test_seed")]
        test_seed: u64,
        #[serde(default = "toy_defaults::eval_size")]
        test_size: usize,
    },
    Files {
        train_src: PathBuf,
        train_tgt: PathBuf,
        val_src: PathBuf,
        val_tgt: PathBuf,
        test_src: PathBuf,
        test_tgt: PathBuf,
        /// Vocabulary files; built from the training side when absent.
        src_vocab: Option<PathBuf>,
        tgt_vocab: Option<PathBuf>,
        #[serde(default = "default_vocab_size")]
        vocab_size: usize,
    },
}

mod toy_defaults {
    pub fn train_seed() -> u64 {
        100
    }
    pub fn val_seed() -> u64 {
        200
    }
    pub fn test_seed() -> u64 {
        300
    }
    pub fn train_size() -> usize {
        5000
    }
    pub fn eval_size() -> usize {
        500
    }
}

fn default_vocab_size() -> usize {
    40_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    pub kind: String,
    /// Existing teacher checkpoints.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    /// Alternatively, train one baseline per seed on the reference data.
    #[serde(default)]
    pub train_seeds: Vec<u64>,
    pub hlayer: Option<usize>,
    pub wemb: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentSection {
    pub recipe: String,
    /// `scratch` or `continue`.
    #[serde(default = "default_init")]
    pub init: String,
    /// Baseline for `continue`; defaults to the first in-plan teacher.
    pub baseline: Option<PathBuf>,
    pub hlayer: usize,
    pub wemb: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_init() -> String {
    "scratch".into()
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_threshold")]
    pub ter_threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            enabled: false,
            ter_threshold: FilterSpec::DEFAULT_THRESHOLD,
        }
    }
}

fn default_threshold() -> f64 {
    FilterSpec::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub initial_lr: Option<f64>,
    pub lr_halve_start_epoch: Option<u64>,
    pub patience: Option<u64>,
    pub max_epochs: Option<u64>,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection {
            beam: default_beam(),
            workers: default_workers(),
        }
    }
}

fn default_beam() -> usize {
    5
}

fn default_workers() -> usize {
    1
}

impl PlanSpec {
    pub fn from_toml(text: &str) -> Result<PlanSpec> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid plan: {e}")))
    }

    pub fn load(path: &Path) -> Result<PlanSpec> {
        let text = crate::textcore::read_utf8(path)?;
        let mut spec = PlanSpec::from_toml(&text)?;
        if let Some(base) = path.parent() {
            spec.resolve_paths(base);
        }
        Ok(spec)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSpec::Files {
            train_src,
            train_tgt,
            val_src,
            val_tgt,
            test_src,
            test_tgt,
            src_vocab,
            tgt_vocab,
            ..
        } = &mut self.data
        {
            for p in [train_src, train_tgt, val_src, val_tgt, test_src, test_tgt] {
                fix(p);
            }
            for p in [src_vocab, tgt_vocab].into_iter().flatten() {
                fix(p);
            }
        }
        if let Some(t) = &mut self.teacher {
            t.checkpoints.iter_mut().for_each(fix);
        }
        if let Some(b) = &mut self.student.baseline {
            fix(b);
        }
    }

    /// Student training settings; unset fields keep the library defaults.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            initial_lr: t.initial_lr.unwrap_or(d.initial_lr),
            lr_halve_start_epoch: t.lr_halve_start_epoch.unwrap_or(d.lr_halve_start_epoch),
            patience: t.patience.unwrap_or(d.patience),
            max_epochs: t.max_epochs.unwrap_or(d.max_epochs),
            clip_norm: t.clip_norm.or(d.clip_norm),
            seed,
            ..d
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam_size: self.decode.beam,
            ..DecodeConfig::default()
        }
    }

    /// Loads or generates the corpora and their vocabularies.
    pub fn load_data(&self) -> Result<(PlanData, Vocab, Vocab)> {
        match &self.data {
            DataSpec::Toy {
                seed,
                size,
                noise_rate,
                val_seed,
                val_size,
                test_seed,
                test_size,
            } => {
                if *size == 0 || *val_size == 0 || *test_size == 0 {
                    return Err(Error::Config("toy corpus sizes must be positive".into()));
                }
                if !(0.0..=1.0).contains(noise_rate) {
                    return Err(Error::Config(format!("noise_rate {noise_rate} is outside [0, 1]")));
                }
                let (sv, tv) = toy_vocabs();
                let data = PlanData {
                    train: gen_toy_corpus(*seed, *size, *noise_rate).corpus,
                    validation: gen_toy_corpus(*val_seed, *val_size, 0.0).corpus,
                    test: gen_toy_corpus(*test_seed, *test_size, 0.0).corpus,
                };
                Ok((data, sv, tv))
            }
            DataSpec::Files {
                train_src,
                train_tgt,
                val_src,
                val_tgt,
                test_src,
                test_tgt,
                src_vocab,
                tgt_vocab,
                vocab_size,
            } => {
                let vocab = |given: &Option<PathBuf>, side: &Path| -> Result<Vocab> {
                    match given {
                        Some(p) => Vocab::load(p),
                        None => Vocab::build(&read_lines(side)?, *vocab_size),
                    }
                };
                let sv = vocab(src_vocab, train_src)?;
                let tv = vocab(tgt_vocab, train_tgt)?;
                let data = PlanData {
                    train: read_parallel(train_src, train_tgt, &sv, &tv)?,
                    validation: read_parallel(val_src, val_tgt, &sv, &tv)?,
                    test: read_parallel(test_src, test_tgt, &sv, &tv)?,
                };
                Ok((data, sv, tv))
            }
        }
    }
}

/// Loads a plan file, runs it and writes its artifacts under `out_dir`:
/// teacher checkpoints trained in-plan, `synthetic.{src,tgt}`, `ter.tsv`,
/// `train.{src,tgt}` (the filtered student corpus), `student.ckpt`,
/// `history.tsv` and `report.tsv`.
///
/// `workers` overrides the plan's decode worker count.
pub fn run_plan_file(path: &Path, out_dir: &Path, workers: Option<usize>) -> Result<PlanOutcome> {
    let spec = PlanSpec::load(path)?;
    run_plan_spec(&spec, out_dir, workers)
}

pub fn run_plan_spec(spec: &PlanSpec, out_dir: &Path, workers: Option<usize>) -> Result<PlanOutcome> {
    let workers = workers.unwrap_or(spec.decode.workers).max(1);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (data, src_vocab, tgt_vocab) = spec.load_data()?;
    let student_dims = ModelDims::new(src_vocab.len(), tgt_vocab.len(), spec.student.wemb, spec.student.hlayer)?;
    let decode = spec.decode_config();

    let mut in_plan_members = Vec::new();
    let teacher = match &spec.teacher {
        None => None,
        Some(t) => {
            let kind = TeacherKind::parse(&t.kind)?;
            let members = if !t.checkpoints.is_empty() {
                if !t.train_seeds.is_empty() {
                    return Err(Error::Config("give teacher checkpoints or train_seeds, not both".into()));
                }
                t.checkpoints
                    .iter()
                    .map(|p| load_checkpoint(p).map(|c| c.params))
                    .collect::<Result<Vec<_>>>()?
            } else if !t.train_seeds.is_empty() {
                let dims = ModelDims::new(
                    src_vocab.len(),
                    tgt_vocab.len(),
                    t.wemb.unwrap_or(spec.student.wemb),
                    t.hlayer.unwrap_or(spec.student.hlayer),
                )?;
                let mut members = Vec::with_capacity(t.train_seeds.len());
                for &seed in &t.train_seeds {
                    let config = TrainConfig {
                        validation_decode: decode.clone(),
                        workers,
                        ..spec.train_config(seed)
                    };
                    let out = train_from(&config, None, &data.train, &data.validation, dims)?;
                    save_checkpoint(&out.checkpoint, &out_dir.join(format!("teacher-{seed}.ckpt")))?;
                    members.push(out.checkpoint.params);
                }
                in_plan_members = members.clone();
                members
            } else {
                return Err(Error::Config("teacher needs checkpoints or train_seeds".into()));
            };
            Some(Teacher::new(kind, members)?)
        }
    };

    let init = match spec.student.init.as_str() {
        "scratch" => StudentInit::Scratch,
        "continue" => {
            let params = match &spec.student.baseline {
                Some(p) => load_checkpoint(p)?.params,
                None => in_plan_members
                    .first()
                    .cloned()
                    .ok_or_else(|| Error::Config("continue training needs a baseline checkpoint".into()))?,
            };
            StudentInit::ContinueFrom(params)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown student init `{other}` (expected scratch or continue)"
            )))
        }
    };

    let plan = DistillPlan {
        name: spec.name.clone(),
        teacher,
        recipe: DataRecipe::parse(&spec.student.recipe)?,
        filter: if spec.filter.enabled {
            FilterSpec::ter(spec.filter.ter_threshold)
        } else {
            FilterSpec::disabled()
        },
        student_dims,
        init,
        train: spec.train_config(spec.student.seed),
        decode,
        workers,
    };
    let outcome = run_plan(&plan, &data)?;
    write_artifacts(&outcome, out_dir, &src_vocab, &tgt_vocab)?;
    Ok(outcome)
}

fn write_artifacts(outcome: &PlanOutcome, out_dir: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<()> {
    let write = |name: &str, text: &str| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    if let Some(f) = &outcome.forward {
        write_parallel(
            &f.synthetic,
            &out_dir.join("synthetic.src"),
            &out_dir.join("synthetic.tgt"),
            src_vocab,
            tgt_vocab,
        )?;
        write("ter.tsv", &f.ter_tsv())?;
    }
    write_parallel(
        &outcome.training_set,
        &out_dir.join("train.src"),
        &out_dir.join("train.tgt"),
        src_vocab,
        tgt_vocab,
    )?;
    save_checkpoint(&outcome.student.checkpoint, &out_dir.join("student.ckpt"))?;
    write("history.tsv", &outcome.student.history_tsv())?;
    let test_lines = outcome
        .test_hyps
        .iter()
        .map(|h| tgt_vocab.decode_line(h))
        .collect::<Result<Vec<_>>>()?;
    write_lines(&out_dir.join("test.hyp"), &test_lines)?;
    write("report.tsv", &render_tsv(std::slice::from_ref(&outcome.row)))
}
