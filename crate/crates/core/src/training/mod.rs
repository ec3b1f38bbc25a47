//! Joint source + target training with random masking and news alignment.

mod batch;
mod loss;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{batch_gradients, AlignItem, Batch, LossBreakdown, LossWeights, RecItem};
pub use loss::{align_loss, rec_loss, total_loss};

use crate::augmentation::{choose_form, MaskWeights};
use crate::autodiff::{AdamConfig, AdamState};
use crate::corpus::Corpus;
use crate::data::{sample_negatives, Domain, Impression};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::model::{ModelConfig, ModelParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignSchedule {
    /// Every step aligns `batch_size` source news drawn with replacement.
    #[default]
    PerStep,
    /// Every source news is aligned exactly once per epoch, spread over the
    /// epoch's steps.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub negatives_k: usize,
    pub seed: u64,
    pub use_target_news: bool,
    pub use_news_align: bool,
    pub use_random_mask: bool,
    pub align_schedule: AlignSchedule,
    /// Relative selection weights for [original, translation, similar];
    /// uniform when absent.
    pub mask_weights: Option<Vec<f64>>,
    /// Items per gradient chunk; chunks are the unit of parallel work.
    pub chunk_size: usize,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 80,
            learning_rate: 3e-4,
            alpha: 1.0,
            beta: 1.0,
            negatives_k: 4,
            seed: 0,
            use_target_news: true,
            use_news_align: true,
            use_random_mask: true,
            align_schedule: AlignSchedule::PerStep,
            mask_weights: None,
            chunk_size: 8,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.negatives_k == 0 || self.chunk_size == 0 {
            return Err(Error::config("epochs, batch_size, negatives_k and chunk_size must be >= 1"));
        }
        loss::check_weights(self.alpha, self.beta)?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        self.mask_weights().validate()?;
        self.model.validate()
    }

    pub fn mask_weights(&self) -> MaskWeights {
        self.mask_weights.clone().map_or(MaskWeights::Uniform, MaskWeights::Weighted)
    }
}

/// Impressions feeding one training run.
pub struct TrainInputs<'a> {
    pub corpus: &'a Corpus,
    pub vocab_size: usize,
    pub source_train: Vec<&'a Impression>,
    /// Few-shot target impressions; empty in the zero-shot setting.
    pub target_train: Vec<&'a Impression>,
    /// Target-domain validation impressions for checkpoint selection.
    pub valid: Vec<&'a Impression>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidSummary {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    /// Means over the epoch's steps.
    pub loss: LossBreakdown,
    pub valid: Option<ValidSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_auc: Option<f64>,
    pub zero_shot: bool,
    pub best_checkpoint: Option<String>,
}

pub struct TrainOutcome {
    pub best: ModelParams,
    pub last: ModelParams,
    pub report: TrainReport,
}

struct Sample {
    domain: Domain,
    history: Vec<usize>,
    candidates: Vec<usize>,
}

/// Derives an independent generator for a named purpose from the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

pub fn init_model(config: &TrainConfig, vocab_size: usize, align_classes: usize) -> Result<ModelParams> {
    let classes = (config.use_news_align && align_classes > 0).then_some(align_classes);
    ModelParams::new(config.model.clone(), vocab_size, classes, &mut stream_rng(config.seed, INIT_STREAM))
}

/// Trains from a fresh initialisation; see [`train_from`].
pub fn train(inputs: &TrainInputs<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = init_model(config, inputs.vocab_size, inputs.corpus.classes().len())?;
    train_from(model, inputs, config)
}

/// Runs `config.epochs` epochs. Each epoch re-draws negatives, shuffles the
/// pooled source and target samples (so the mix follows dataset sizes) and
/// takes one Adam step per batch. After every epoch the model is validated;
/// the epoch with the best validation AUC is returned as `best`.
pub fn train_from(mut model: ModelParams, inputs: &TrainInputs<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let corpus = inputs.corpus;
    if inputs.source_train.is_empty() {
        return Err(Error::config("training needs source-domain impressions"));
    }
    if model.vocab_size() != inputs.vocab_size {
        return Err(Error::config("model vocabulary size differs from the corpus vocabulary"));
    }
    let align = config.use_news_align && config.alpha > 0.0;
    if align && model.align_classes() != Some(corpus.classes().len()) {
        return Err(Error::config("alignment head width must equal the number of source news"));
    }
    let zero_shot = inputs.target_train.is_empty();
    let weights = LossWeights { alpha: if align { config.alpha } else { 0.0 }, beta: config.beta, zero_shot };
    let mask = config.mask_weights();
    let form_limit = if config.use_target_news { 3 } else { 2 };

    let mut rng = stream_rng(config.seed, TRAIN_STREAM);
    let mut adam = AdamState::new(model.tensors(), config.adam);
    let source_pool = corpus.news_in(Domain::Source);
    let target_pool = corpus.news_in(Domain::Target);
    let mut impressions: Vec<&Impression> = Vec::new();
    if config.beta > 0.0 {
        impressions.extend(&inputs.source_train);
    }
    impressions.extend(&inputs.target_train);

    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_valid_auc: None,
        zero_shot,
        best_checkpoint: None,
    };
    let mut best = model.clone();

    for epoch in 1..=config.epochs {
        let mut samples = Vec::new();
        for imp in &impressions {
            let history = corpus.history(imp)?;
            let candidates = corpus.candidates(imp)?;
            let mut clicked: HashSet<usize> = history.iter().copied().collect();
            clicked.extend(candidates.iter().zip(&imp.labels).filter(|(_, &l)| l == 1).map(|(c, _)| *c));
            let pool = if imp.domain == Domain::Source { &source_pool } else { &target_pool };
            for s in sample_negatives(&0usize, &candidates, &imp.labels, pool, &clicked, config.negatives_k, &mut rng)? {
                let mut c = vec![s.positive];
                c.extend(s.negatives);
                samples.push(Sample { domain: imp.domain, history: history.clone(), candidates: c });
            }
        }
        samples.shuffle(&mut rng);

        let steps = if !samples.is_empty() {
            samples.len().div_ceil(config.batch_size)
        } else if align {
            corpus.classes().len().div_ceil(config.batch_size)
        } else {
            0
        };
        let mut epoch_classes: Vec<usize> = Vec::new();
        if align && config.align_schedule == AlignSchedule::PerEpoch {
            epoch_classes = (0..corpus.classes().len()).collect();
            epoch_classes.shuffle(&mut rng);
        }

        let mut sums = LossBreakdown::default();
        for step in 0..steps {
            let lo = step * config.batch_size;
            let chunk = &samples[lo.min(samples.len())..(lo + config.batch_size).min(samples.len())];
            let mut batch = Batch::default();
            for s in chunk {
                let masked = config.use_random_mask && s.domain == Domain::Source;
                let mut resolve = |i: usize| -> Result<Vec<usize>> {
                    form_of(corpus, i, masked, form_limit, &mask, &mut rng)
                };
                let history = s.history.iter().map(|&i| resolve(i)).collect::<Result<Vec<_>>>()?;
                let candidates = s.candidates.iter().map(|&i| resolve(i)).collect::<Result<Vec<_>>>()?;
                batch.rec.push(RecItem { domain: s.domain, history, candidates, seed: rng.next_u64() });
            }
            if align {
                let classes: Vec<usize> = match config.align_schedule {
                    AlignSchedule::PerStep => {
                        (0..config.batch_size).map(|_| rng.random_range(0..corpus.classes().len())).collect()
                    }
                    AlignSchedule::PerEpoch => {
                        let per = epoch_classes.len().div_ceil(steps);
                        epoch_classes.iter().skip(step * per).take(per).copied().collect()
                    }
                };
                for class in classes {
                    let tokens = form_of(corpus, corpus.classes()[class], true, form_limit, &mask, &mut rng)?;
                    batch.align.push(AlignItem { tokens, class, seed: rng.next_u64() });
                }
            }
            let (l, grads) = batch_gradients(&model, &batch, weights, config.chunk_size)?;
            adam.step(&mut model.tensors_mut(), &grads, config.learning_rate)?;
            sums.align += l.align;
            sums.source += l.source;
            sums.target += l.target;
            sums.total += l.total;
        }
        if !model.is_finite() {
            return Err(Error::contract(format!("parameters became non-finite in epoch {epoch}")));
        }
        let n = steps.max(1) as f64;
        let loss = LossBreakdown {
            align: sums.align / n,
            source: sums.source / n,
            target: sums.target / n,
            total: sums.total / n,
        };

        let valid = if inputs.valid.is_empty() {
            None
        } else {
            let r = evaluate(&model, corpus, &inputs.valid, false)?;
            Some(ValidSummary { auc: r.auc, mrr: r.mrr, ndcg5: r.ndcg5, ndcg10: r.ndcg10 })
        };
        log::info!(
            "epoch {epoch}/{}: {steps} steps, loss {:.5} (align {:.5}, source {:.5}, target {:.5}){}",
            config.epochs,
            loss.total,
            loss.align,
            loss.source,
            loss.target,
            valid.as_ref().map(|v| format!(", valid AUC {:.4}", v.auc)).unwrap_or_default()
        );
        let improved = match (&valid, report.best_valid_auc) {
            (Some(v), Some(b)) => v.auc > b,
            (Some(_), None) => true,
            // Without validation data the latest epoch wins.
            (None, _) => true,
        };
        if improved {
            best = model.clone();
            report.best_epoch = epoch;
            report.best_valid_auc = valid.as_ref().map(|v| v.auc);
        }
        report.epochs.push(EpochLog { epoch, steps, loss, valid });
    }
    Ok(TrainOutcome { best, last: model, report })
}

/// Token sequence of one occurrence of news `i`: a random form of its
/// augmented set when masking applies, else the original title.
fn form_of(
    corpus: &Corpus,
    i: usize,
    masked: bool,
    form_limit: usize,
    weights: &MaskWeights,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    match corpus.forms(i).filter(|_| masked) {
        Some(forms) => Ok(forms[choose_form(forms.len().min(form_limit), weights, rng)?].clone()),
        None => Ok(corpus.tokens(i).to_vec()),
    }
}
