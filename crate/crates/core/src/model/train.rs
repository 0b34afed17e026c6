//! Teacher-forced training with Adam and validation-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::tape::Mat;
use super::tokenizer::{tokenize, TokenError};
use super::transformer::{ConfigError, Example, ModelConfig, Transformer};
use super::vocab::{VocabError, Vocabulary};
use crate::mmp::MmpRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop_patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 5e-4,
            early_stop_patience_epochs: 2,
            max_epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.early_stop_patience_epochs == 0 || self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size, early_stop_patience_epochs and max_epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ConfigError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("checkpoint does not fit the data: {0}")]
    Incompatible(String),
}

/// Token-level view of a pair: source molecule tokens and rule tokens.
pub fn record_tokens(record: &MmpRecord) -> Result<(Vec<String>, Vec<String>), TokenError> {
    Ok((tokenize(&record.source)?, tokenize(&record.rule)?))
}

/// Encoded splits ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    /// Records dropped for exceeding the length bounds (or failing to
    /// tokenize), across both splits.
    pub dropped: usize,
    /// Validation tokens absent from the training vocabulary.
    pub unknown_tokens: usize,
}

/// Tokenizes both splits, builds the vocabulary from the training split
/// (unless one is supplied) and drops oversize records.
pub fn prepare(
    train: &[MmpRecord],
    valid: &[MmpRecord],
    config: &ModelConfig,
    vocab: Option<Vocabulary>,
) -> Result<PreparedData, TrainError> {
    let fits = |(src, rule): &(Vec<String>, Vec<String>)| {
        src.len() < config.max_src_len && rule.len() < config.max_tgt_len
    };
    let mut dropped = 0;
    let mut tokenized = |records: &[MmpRecord]| -> Vec<(Vec<String>, Vec<String>)> {
        records
            .iter()
            .filter_map(|r| match record_tokens(r) {
                Ok(t) if fits(&t) => Some(t),
                _ => {
                    dropped += 1;
                    None
                }
            })
            .collect()
    };
    let train_tokens = tokenized(train);
    let valid_tokens = tokenized(valid);
    let vocab = match vocab {
        Some(v) => v,
        None => Vocabulary::build(
            train_tokens
                .iter()
                .flat_map(|(s, r)| s.iter().chain(r).cloned()),
        )?,
    };
    let mut unknown_tokens = 0;
    let mut encode = |pairs: &[(Vec<String>, Vec<String>)], count: bool| -> Vec<Example> {
        pairs
            .iter()
            .map(|(s, r)| {
                let (src, us) = vocab.encode(s);
                let (tgt, ur) = vocab.encode(r);
                if count {
                    unknown_tokens += us + ur;
                }
                Example::new(src, tgt)
            })
            .collect()
    };
    let train = encode(&train_tokens, false);
    let valid = encode(&valid_tokens, true);
    if train.is_empty() {
        return Err(TrainError::InsufficientData("no training pairs fit the model".into()));
    }
    if valid.is_empty() {
        return Err(TrainError::InsufficientData("no validation pairs fit the model".into()));
    }
    Ok(PreparedData {
        vocab,
        train,
        valid,
        dropped,
        unknown_tokens,
    })
}

/// Adam without schedule or weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(model: &Transformer, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: model.params().zeros_like(),
            v: model.params().zeros_like(),
        }
    }

    pub fn step(&mut self, model: &mut Transformer, grads: &[Mat]) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((p, g), m), v) in model
            .params_mut()
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Examples per gradient shard; shards run in parallel and are reduced in
/// order, so results do not depend on the thread count.
const SHARD: usize = 16;

fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [a, b, c] {
        x = (x ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 31;
    }
    x
}

/// Owns a model and its optimizer state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Transformer,
    pub config: TrainConfig,
    adam: Adam,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Transformer, config: TrainConfig) -> Trainer {
        let adam = Adam::new(&model, config.learning_rate);
        Trainer {
            model,
            config,
            adam,
            epoch: 0,
        }
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    /// One optimizer step on `batch`; returns (summed loss, scored tokens).
    pub fn step(&mut self, batch: &[Example], step: u64) -> (f64, usize) {
        let (seed, epoch) = (self.config.seed, self.epoch as u64);
        let model = &self.model;
        let shards: Vec<(f64, usize, Vec<Mat>)> = batch
            .par_chunks(SHARD)
            .enumerate()
            .map(|(i, shard)| model.loss_sum_and_gradients(shard, Some(mix(seed, epoch, step, i as u64))))
            .collect();
        let count: usize = shards.iter().map(|s| s.1).sum();
        let loss: f64 = shards.iter().map(|s| s.0).sum();
        let mut shards = shards.into_iter();
        let mut grads = shards.next().map(|s| s.2).unwrap_or_default();
        for (_, _, g) in shards {
            for (acc, g) in grads.iter_mut().zip(g) {
                *acc += &g;
            }
        }
        let scale = 1.0 / count.max(1) as f64;
        grads.iter_mut().for_each(|g| *g *= scale);
        self.adam.step(&mut self.model, &grads);
        (loss, count)
    }

    /// Shuffles `data` and runs one epoch; returns the mean token loss
    /// observed during training (dropout active).
    pub fn train_epoch(&mut self, data: &[Example]) -> f64 {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, self.epoch as u64, u64::MAX, 0));
        order.shuffle(&mut rng);
        let (mut loss, mut count) = (0.0, 0);
        for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (l, c) = self.step(&batch, step as u64);
            loss += l;
            count += c;
        }
        self.epoch += 1;
        loss / count.max(1) as f64
    }
}

/// Mean token loss over `data` with dropout off.
pub fn evaluate(model: &Transformer, data: &[Example], batch_size: usize) -> f64 {
    let parts: Vec<(f64, usize)> = data
        .par_chunks(batch_size.max(1))
        .map(|b| model.loss_sum(b, None))
        .collect();
    let (loss, count) = parts
        .into_iter()
        .fold((0.0, 0), |(l, c), (pl, pc)| (l + pl, c + pc));
    loss / count.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation loss.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    pub dropped: usize,
    pub unknown_tokens: usize,
}

/// Trains until validation loss stalls for `early_stop_patience_epochs`
/// epochs or `max_epochs` is reached. With `resume`, training continues
/// from that checkpoint's parameters, vocabulary and epoch counter (the
/// optimizer moments start fresh).
pub fn train(
    train: &[MmpRecord],
    valid: &[MmpRecord],
    model_config: &ModelConfig,
    config: &TrainConfig,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    model_config.validate()?;
    let (model, vocab, start_epoch, mut best_loss) = match resume {
        Some(ck) => {
            if ck.model.config() != model_config {
                return Err(TrainError::Incompatible("model configuration differs".into()));
            }
            (Some(ck.model), Some(ck.vocab), ck.epoch, ck.best_valid_loss)
        }
        None => (None, None, 0, f64::INFINITY),
    };
    let data = prepare(train, valid, model_config, vocab)?;
    let model = match model {
        Some(m) => m,
        None => Transformer::new(model_config.clone(), data.vocab.len(), config.seed)?,
    };
    let mut trainer = Trainer::new(model, config.clone());
    trainer.set_epoch(start_epoch);
    let mut best = Checkpoint {
        model: trainer.model.clone(),
        vocab: data.vocab.clone(),
        train_config: config.clone(),
        epoch: start_epoch,
        best_valid_loss: best_loss,
    };
    let mut history = Vec::new();
    let mut stale = 0;
    while trainer.epoch() < config.max_epochs {
        let train_loss = trainer.train_epoch(&data.train);
        let valid_loss = evaluate(&trainer.model, &data.valid, config.batch_size);
        let stats = EpochStats {
            epoch: trainer.epoch(),
            train_loss,
            valid_loss,
        };
        on_epoch(&stats);
        history.push(stats);
        if valid_loss < best_loss {
            best_loss = valid_loss;
            stale = 0;
            best = Checkpoint {
                model: trainer.model.clone(),
                vocab: data.vocab.clone(),
                train_config: config.clone(),
                epoch: trainer.epoch(),
                best_valid_loss: valid_loss,
            };
        } else {
            stale += 1;
            if stale >= config.early_stop_patience_epochs {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        checkpoint: best,
        history,
        dropped: data.dropped,
        unknown_tokens: data.unknown_tokens,
    })
}
