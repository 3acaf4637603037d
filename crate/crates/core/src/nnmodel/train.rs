//! Mini-batch SGD with per-epoch shuffling, step-wise learning-rate halving
//! and patience-based early stopping on a validation score.

use std::path::PathBuf;

use super::checkpoint::{load_checkpoint, Checkpoint, TrainingMeta};
use super::network::{loss_and_gradients_into, predicted_tokens, sentence_nll};
use super::params::{ModelDims, ModelParams};
use crate::decode::{translate_corpus, DecodeConfig, Scorer};
use crate::metrics::corpus_bleu;
use crate::textcore::{shuffle_order, ParallelCorpus, SentencePair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitMode {
    Scratch,
    ContinueFrom(PathBuf),
}

/// What the early-stopping monitor compares between epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMetric {
    /// Corpus BLEU of beam decodes.
    #[default]
    Bleu,
    /// Negated per-token perplexity, so that higher is better.
    Perplexity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    /// First epoch (1-based) whose learning rate is half the previous one.
    pub lr_halve_start_epoch: u64,
    pub patience: u64,
    pub max_epochs: u64,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    pub validation_metric: ValidationMetric,
    /// Decoder settings for BLEU validation.
    pub validation_decode: DecodeConfig,
    /// Worker threads for validation decoding.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            initial_lr: 1.0,
            lr_halve_start_epoch: 4,
            patience: 3,
            max_epochs: 20,
            seed: 1,
            init_mode: InitMode::Scratch,
            clip_norm: None,
            validation_metric: ValidationMetric::Bleu,
            validation_decode: DecodeConfig::default(),
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial learning rate must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        self.validation_decode.validate()
    }

    /// Learning rate used throughout 1-based `epoch`.
    pub fn lr_for_epoch(&self, epoch: u64) -> f64 {
        if epoch < self.lr_halve_start_epoch {
            self.initial_lr
        } else {
            let halvings = (epoch - self.lr_halve_start_epoch + 1).min(1074) as i32;
            self.initial_lr * 0.5f64.powi(halvings)
        }
    }
}

/// Tracks the best validation score and signals when `patience` epochs in a
/// row failed to beat it.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: u64,
    best: Option<f64>,
    best_epoch: u64,
    stale: u64,
}

impl EarlyStopping {
    pub fn new(patience: u64) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records one epoch's score; returns `true` when training should stop.
    pub fn observe(&mut self, epoch: u64, score: f64) -> bool {
        if self.best.map_or(true, |b| score > b) {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn is_best(&self, epoch: u64) -> bool {
        self.best_epoch == epoch && self.best.is_some()
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> u64 {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub lr: f64,
    /// Mean per-token training loss over the epoch's batches.
    pub train_loss: f64,
    pub validation_score: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// Tab-separated history, one line per epoch.
    pub fn history_tsv(&self) -> String {
        let mut out = String::from("epoch\tlr\ttrain_loss\tvalidation_score\n");
        for r in &self.history {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\n",
                r.epoch, r.lr, r.train_loss, r.validation_score
            ));
        }
        out
    }
}

/// Validation score of `params` under `config.validation_metric`.
pub fn validation_score(params: &ModelParams, validation: &ParallelCorpus, config: &TrainConfig) -> Result<f64> {
    match config.validation_metric {
        ValidationMetric::Bleu => {
            let sources = validation.sources();
            let refs = validation.targets();
            let hyps = translate_corpus(
                &Scorer::Single(params),
                &sources,
                &config.validation_decode,
                None,
                config.workers,
            )?;
            let tokens: Vec<_> = hyps.into_iter().map(|h| h.tokens).collect();
            Ok(corpus_bleu(&tokens, &refs)?.score)
        }
        ValidationMetric::Perplexity => {
            let mut nll = 0.0;
            let mut count = 0;
            for p in validation.pairs() {
                nll += sentence_nll(params, &p.source, &p.target)?;
                count += predicted_tokens(p);
            }
            Ok(-(nll / count as f64).exp())
        }
    }
}

/// Trains a model according to `config.init_mode`.
pub fn train(config: &TrainConfig, train_set: &ParallelCorpus, validation: &ParallelCorpus, dims: ModelDims) -> Result<TrainOutcome> {
    let init = match &config.init_mode {
        InitMode::Scratch => None,
        InitMode::ContinueFrom(path) => {
            let ck = load_checkpoint(path)?;
            ck.ensure_dims(&dims)?;
            Some(ck.params)
        }
    };
    train_from(config, init, train_set, validation, dims)
}

/// Trains from the given parameters, or from a seeded initialization.
///
/// The learning-rate schedule always starts at epoch 1. With `max_epochs`
/// of 0 the starting parameters are returned unchanged.
pub fn train_from(
    config: &TrainConfig,
    init: Option<ModelParams>,
    train_set: &ParallelCorpus,
    validation: &ParallelCorpus,
    dims: ModelDims,
) -> Result<TrainOutcome> {
    config.validate()?;
    dims.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Data("training and validation corpora must be non-empty".into()));
    }
    train_set.validate(dims.src_vocab, dims.tgt_vocab)?;
    validation.validate(dims.src_vocab, dims.tgt_vocab)?;
    let mut params = match init {
        Some(p) if p.dims() != dims => {
            return Err(Error::Checkpoint(format!(
                "initial parameters have dims {:?}, expected {dims:?}",
                p.dims()
            )))
        }
        Some(p) => p,
        None => ModelParams::init(dims, config.seed),
    };

    let mut best = Checkpoint {
        params: params.clone(),
        meta: TrainingMeta {
            epoch: 0,
            lr: config.initial_lr,
            best_score: None,
            seed: config.seed,
        },
    };
    let mut monitor = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut grads = ModelParams::zeros(dims);
    let mut stopped_early = false;
    let pairs = train_set.pairs();
    let mut batch: Vec<SentencePair> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        let lr = config.lr_for_epoch(epoch);
        let order = shuffle_order(pairs.len(), epoch, config.seed);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i].clone()));
            let loss = loss_and_gradients_into(&params, &batch, &mut grads)?;
            if let Some(max) = config.clip_norm {
                let norm = grads.l2_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            params.sgd_step(&grads, lr);
            loss_sum += loss;
            batches += 1;
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let score = validation_score(&params, validation, config)?;
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            validation_score: score,
        });
        let stop = monitor.observe(epoch, score);
        if monitor.is_best(epoch) {
            best = Checkpoint {
                params: params.clone(),
                meta: TrainingMeta {
                    epoch,
                    lr,
                    best_score: Some(score),
                    seed: config.seed,
                },
            };
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: best,
        history,
        stopped_early,
    })
}
