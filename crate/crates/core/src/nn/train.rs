//! Epoch loop for the recurrent taggers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::tagger::{ModelKind, PackedBatch, Tagger, TaggerConfig};
use super::vocab::Vocabulary;
use super::Parameterized;
use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};
use crate::par;
use crate::tagging::encode_tags;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// 40 epochs, batch 128, learning rate 0.001, 128/256 dimensions.
    pub fn published(seed: u64) -> Self {
        Self { epochs: 40, batch_size: 128, learning_rate: 1e-3, embedding_dim: 128, hidden_dim: 256, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("epochs, batch size and dimensions must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::published(0)
    }
}

/// A word as letter ids (hyphens removed) with class indices per letter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedExample {
    pub ids: Vec<usize>,
    pub tags: Vec<usize>,
}

impl TaggedExample {
    pub fn from_word(word: &SyllabifiedWord, vocab: &Vocabulary) -> Result<Self> {
        let ids = vocab.encode(word.surface(), false)?;
        let tags = encode_tags(word)?.tags().iter().map(|t| t.index()).collect();
        Ok(Self { ids, tags })
    }
}

pub fn prepare(words: &[SyllabifiedWord], vocab: &Vocabulary) -> Result<Vec<TaggedExample>> {
    words.iter().map(|w| TaggedExample::from_word(w, vocab)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
    /// Fraction of validation words tagged entirely correctly.
    pub valid_word_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Tagger,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

/// Aggregate loss and accuracies over a data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub tag_acc: f64,
    pub word_acc: f64,
}

fn batch_of(examples: &[&TaggedExample]) -> Result<PackedBatch> {
    let ids: Vec<&[usize]> = examples.iter().map(|e| e.ids.as_slice()).collect();
    let tags: Vec<&[usize]> = examples.iter().map(|e| e.tags.as_slice()).collect();
    PackedBatch::new(&ids, Some(&tags))
}

/// Weight of a batch loss in an epoch average: real steps for softmax
/// heads, sequences for the CRF head.
fn loss_weight(model: &Tagger, batch: &PackedBatch) -> f64 {
    if model.crf.is_some() {
        batch.packing.batch_size() as f64
    } else {
        batch.packing.total() as f64
    }
}

#[derive(Default)]
struct Tally {
    loss: f64,
    weight: f64,
    tags_right: usize,
    tags: usize,
    words_right: usize,
    words: usize,
}

impl Tally {
    fn add(&mut self, loss: f64, weight: f64, batch: &PackedBatch, predictions: &[Vec<usize>]) {
        self.loss += loss * weight;
        self.weight += weight;
        let gold = batch.gold.as_ref().expect("training batches carry gold");
        for (b, pred) in predictions.iter().enumerate() {
            let right = batch.packing.sequence_rows(b).zip(pred).filter(|(r, p)| gold[*r] == **p).count();
            self.tags_right += right;
            self.tags += pred.len();
            self.words_right += usize::from(right == pred.len());
            self.words += 1;
        }
    }

    fn finish(&self) -> Evaluation {
        Evaluation {
            loss: self.loss / self.weight,
            tag_acc: self.tags_right as f64 / self.tags as f64,
            word_acc: self.words_right as f64 / self.words as f64,
        }
    }
}

/// Loss and accuracies of `model` on `data`, batches scored in parallel.
pub fn evaluate(model: &Tagger, data: &[TaggedExample], batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let chunks: Vec<&[TaggedExample]> = data.chunks(batch_size.max(1)).collect();
    let scored = par::map(&chunks, |chunk| -> Result<_> {
        let refs: Vec<&TaggedExample> = chunk.iter().collect();
        let batch = batch_of(&refs)?;
        let (loss, preds) = model.evaluate_batch(&batch)?;
        Ok((loss, batch, preds))
    });
    let mut tally = Tally::default();
    for item in scored {
        let (loss, batch, preds) = item?;
        tally.add(loss, loss_weight(model, &batch), &batch, &preds);
    }
    Ok(tally.finish())
}

/// Trains a tagger of `kind` with Adam and seeded shuffling, keeping the
/// parameters of the epoch with the best validation word accuracy (ties go
/// to the lower validation loss, then to the earlier epoch).
pub fn train_tagger(
    kind: ModelKind,
    train: &[TaggedExample],
    valid: &[TaggedExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_tagger_with(kind, train, valid, cfg, |_| {})
}

/// [`train_tagger`] with a callback after every epoch.
pub fn train_tagger_with<F: FnMut(&EpochMetrics)>(
    kind: ModelKind,
    train: &[TaggedExample],
    valid: &[TaggedExample],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab_size = Vocabulary::standard().size();
    let config = TaggerConfig { kind, vocab_size, embedding_dim: cfg.embedding_dim, hidden_dim: cfg.hidden_dim };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Tagger::new(&mut rng, config)?;
    let mut adam = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Tagger, usize, f64, f64)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut tally = Tally::default();
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&TaggedExample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = batch_of(&refs)?;
            let result = model.train_batch(&batch).map_err(|e| diverged(e, epoch))?;
            if !result.loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: result.loss });
            }
            tally.add(result.loss, loss_weight(&model, &batch), &batch, &result.predictions);
            adam.step(model.parameters_mut(), &result.grads.parameters_owned())
                .map_err(|_| Error::Diverged { epoch, loss: result.loss })?;
        }
        let fit = tally.finish();
        let val = evaluate(&model, valid, cfg.batch_size).map_err(|e| diverged(e, epoch))?;
        if !val.loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val.loss });
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: fit.loss,
            train_acc: fit.tag_acc,
            valid_loss: val.loss,
            valid_acc: val.tag_acc,
            valid_word_acc: val.word_acc,
        };
        on_epoch(&metrics);
        history.push(metrics);
        let improves = match &best {
            None => true,
            Some((_, _, word_acc, loss)) => {
                val.word_acc > *word_acc || (val.word_acc == *word_acc && val.loss < *loss)
            }
        };
        if improves {
            best = Some((model.clone(), epoch, val.word_acc, val.loss));
        }
    }
    let (model, best_epoch, _, _) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, history })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged { epoch, loss: f64::NAN },
        other => other,
    }
}

/// Per-epoch trace as CSV with header `epoch,train_loss,train_acc,valid_loss,valid_acc`.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,valid_loss,valid_acc\n");
    for m in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.train_acc, m.valid_loss, m.valid_acc
        ));
    }
    out
}

/// First epoch whose training tag accuracy reaches `fraction` of the final one.
pub fn epochs_to_fraction(history: &[EpochMetrics], fraction: f64) -> Option<usize> {
    let last = history.last()?.train_acc;
    history.iter().find(|m| m.train_acc >= fraction * last).map(|m| m.epoch)
}
