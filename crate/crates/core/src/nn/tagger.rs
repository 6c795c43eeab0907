//! Recurrent taggers: embedding, (bi)LSTM, dense head over {S, C, PAD} and
//! an optional CRF on top of the dense logits.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{softmax_cross_entropy, Dense, Embedding};
use super::lstm::{prefixed, BiLstm, BiLstmCache, LstmCache, LstmLayer};
use super::packing::Packing;
use super::{Parameterized, Tensor};
use crate::crf::{crf_nll, viterbi_constrained, CrfLayer, NUM_TAGS};
use crate::error::{Error, Result};
use crate::par;
use crate::tagging::{Tag, TagSequence};

/// Architecture tag stored in checkpoints and accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lstm,
    Blstm,
    BlstmCrf,
    Seq2seq,
}

impl ModelKind {
    pub const TAGGERS: [ModelKind; 3] = [ModelKind::Lstm, ModelKind::Blstm, ModelKind::BlstmCrf];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Blstm => "blstm",
            ModelKind::BlstmCrf => "blstm-crf",
            ModelKind::Seq2seq => "seq2seq",
        }
    }

    pub fn is_bidirectional(self) -> bool {
        !matches!(self, ModelKind::Lstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(ModelKind::Lstm),
            "blstm" => Ok(ModelKind::Blstm),
            "blstm-crf" => Ok(ModelKind::BlstmCrf),
            "seq2seq" => Ok(ModelKind::Seq2seq),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl TaggerConfig {
    /// 27 symbols, 128-wide embeddings, 256 hidden units.
    pub fn published(kind: ModelKind) -> Self {
        Self { kind, vocab_size: 27, embedding_dim: 128, hidden_dim: 256 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::Seq2seq {
            return Err(Error::Config("seq2seq is not a tagger architecture".into()));
        }
        if self.vocab_size == 0 || self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("tagger dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn encoder_width(&self) -> usize {
        if self.kind.is_bidirectional() {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Uni(LstmLayer),
    Bi(BiLstm),
}

enum EncoderCache {
    Uni(LstmCache),
    Bi(BiLstmCache),
}

impl EncoderCache {
    fn output(&self) -> &Tensor {
        match self {
            EncoderCache::Uni(c) => &c.hidden,
            EncoderCache::Bi(c) => &c.output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub config: TaggerConfig,
    pub embedding: Embedding,
    pub encoder: Encoder,
    pub dense: Dense,
    pub crf: Option<CrfLayer>,
}

/// Id sequences sorted by descending length and packed time-major.
#[derive(Debug, Clone)]
pub struct PackedBatch {
    /// `order[b]` is the caller's index of packed sequence `b`.
    pub order: Vec<usize>,
    pub packing: Packing,
    pub ids: Vec<usize>,
    /// Gold class per packed row, when tags were supplied.
    pub gold: Option<Vec<usize>>,
}

impl PackedBatch {
    pub fn new(seqs: &[&[usize]], tags: Option<&[&[usize]]>) -> Result<Self> {
        if let Some(tags) = tags {
            if tags.len() != seqs.len() {
                return Err(Error::LengthMismatch { left: seqs.len(), right: tags.len() });
            }
            for (s, t) in seqs.iter().zip(tags) {
                if s.len() != t.len() {
                    return Err(Error::TagLengthMismatch { tags: t.len(), letters: s.len() });
                }
            }
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let order = Packing::sort_order(&lens);
        let sorted: Vec<usize> = order.iter().map(|&i| lens[i]).collect();
        let packing = Packing::new(&sorted)?;
        let gather = |src: &[&[usize]]| {
            let mut out = vec![0; packing.total()];
            for (b, &i) in order.iter().enumerate() {
                for (t, r) in packing.sequence_rows(b).enumerate() {
                    out[r] = src[i][t];
                }
            }
            out
        };
        let ids = gather(seqs);
        let gold = tags.map(gather);
        Ok(Self { order, packing, ids, gold })
    }
}

struct ForwardCache {
    embedded: Tensor,
    encoder: EncoderCache,
    logits: Tensor,
}

/// Loss, gradients and decoded classes for one training batch.
pub struct BatchResult {
    pub loss: f64,
    pub grads: Tagger,
    /// Decoded classes per packed sequence (same order as the batch).
    pub predictions: Vec<Vec<usize>>,
}

impl Tagger {
    pub fn new<R: Rng>(rng: &mut R, config: TaggerConfig) -> Result<Self> {
        config.validate()?;
        let embedding = Embedding::new(rng, config.vocab_size, config.embedding_dim);
        let encoder = if config.kind.is_bidirectional() {
            Encoder::Bi(BiLstm::new(rng, config.embedding_dim, config.hidden_dim))
        } else {
            Encoder::Uni(LstmLayer::new(rng, config.embedding_dim, config.hidden_dim))
        };
        let dense = Dense::new(rng, config.encoder_width(), NUM_TAGS);
        let crf = (config.kind == ModelKind::BlstmCrf).then(|| CrfLayer::new(rng, NUM_TAGS));
        Ok(Self { config, embedding, encoder, dense, crf })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros(config: TaggerConfig) -> Result<Self> {
        config.validate()?;
        let encoder = if config.kind.is_bidirectional() {
            Encoder::Bi(BiLstm::zeros(config.embedding_dim, config.hidden_dim))
        } else {
            Encoder::Uni(LstmLayer::zeros(config.embedding_dim, config.hidden_dim))
        };
        Ok(Self {
            config,
            embedding: Embedding::zeros(config.vocab_size, config.embedding_dim),
            encoder,
            dense: Dense::zeros(config.encoder_width(), NUM_TAGS),
            crf: (config.kind == ModelKind::BlstmCrf).then(|| CrfLayer::zeros(NUM_TAGS)),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    fn forward(&self, batch: &PackedBatch) -> Result<ForwardCache> {
        let embedded = self.embedding.lookup(&batch.ids)?;
        let encoder = match &self.encoder {
            Encoder::Uni(l) => EncoderCache::Uni(l.forward(&embedded, &batch.packing)?),
            Encoder::Bi(b) => EncoderCache::Bi(b.run(&embedded, &batch.packing)?),
        };
        let logits = self.dense.forward(encoder.output())?;
        Ok(ForwardCache { embedded, encoder, logits })
    }

    fn sequence_rows(batch: &PackedBatch, b: usize) -> Vec<usize> {
        batch.packing.sequence_rows(b).collect()
    }

    /// Decoded classes per packed sequence: `S` at the first step, `S` or
    /// `C` elsewhere. Padding is never emitted.
    fn decode(&self, batch: &PackedBatch, logits: &Tensor) -> Result<Vec<Vec<usize>>> {
        let allowed = |t: usize, j: usize| if t == 0 { j == Tag::S.index() } else { j != 2 };
        let mut out = Vec::with_capacity(batch.packing.batch_size());
        match &self.crf {
            Some(crf) => {
                let em = crf.project(logits)?;
                for b in 0..batch.packing.batch_size() {
                    let rows = em.gather_rows(&Self::sequence_rows(batch, b));
                    out.push(viterbi_constrained(&rows, crf, allowed)?.0);
                }
            }
            None => {
                for b in 0..batch.packing.batch_size() {
                    let path = batch
                        .packing
                        .sequence_rows(b)
                        .enumerate()
                        .map(|(t, r)| {
                            let row = logits.row(r);
                            // Ties go to S; padding is never a candidate.
                            if t > 0 && row[1] > row[0] {
                                1
                            } else {
                                0
                            }
                        })
                        .collect();
                    out.push(path);
                }
            }
        }
        Ok(out)
    }

    /// Loss over the batch and its gradient with respect to the logits.
    /// Softmax heads average over real steps, the CRF head over sequences.
    fn head_loss(&self, batch: &PackedBatch, logits: &Tensor) -> Result<(f64, Tensor, Option<CrfLayer>)> {
        let gold = batch.gold.as_ref().ok_or_else(|| Error::Config("batch carries no gold tags".into()))?;
        match &self.crf {
            None => {
                let (loss, d) = softmax_cross_entropy(logits, gold, None)?;
                Ok((loss, d, None))
            }
            Some(crf) => {
                let em = crf.project(logits)?;
                let n = batch.packing.batch_size() as f64;
                let mut d_em = em.zeros_like();
                let mut g = CrfLayer::zeros(NUM_TAGS);
                let mut loss = 0.0;
                for b in 0..batch.packing.batch_size() {
                    let rows = Self::sequence_rows(batch, b);
                    let path: Vec<usize> = rows.iter().map(|&r| gold[r]).collect();
                    let (l, cg) = crf_nll(&em.gather_rows(&rows), &path, crf)?;
                    loss += l / n;
                    let mut de = cg.d_emissions;
                    de.scale(1.0 / n);
                    d_em.scatter_add_rows(&rows, &de);
                    for (dst, src) in [
                        (&mut g.transitions, &cg.layer.transitions),
                        (&mut g.left, &cg.layer.left),
                        (&mut g.right, &cg.layer.right),
                    ] {
                        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                            *d += s / n;
                        }
                    }
                }
                let d_logits = crf.project_backward(logits, &d_em, &mut g);
                Ok((loss, d_logits, Some(g)))
            }
        }
    }

    /// Loss only (used for validation and finite-difference checks).
    pub fn loss(&self, batch: &PackedBatch) -> Result<f64> {
        let cache = self.forward(batch)?;
        Ok(self.head_loss(batch, &cache.logits)?.0)
    }

    /// Loss and decoded classes without gradients.
    pub fn evaluate_batch(&self, batch: &PackedBatch) -> Result<(f64, Vec<Vec<usize>>)> {
        let cache = self.forward(batch)?;
        let (loss, _, _) = self.head_loss(batch, &cache.logits)?;
        Ok((loss, self.decode(batch, &cache.logits)?))
    }

    /// Forward, loss and full backward pass over a gold-tagged batch.
    pub fn train_batch(&self, batch: &PackedBatch) -> Result<BatchResult> {
        let cache = self.forward(batch)?;
        let (loss, d_logits, crf_grads) = self.head_loss(batch, &cache.logits)?;
        let predictions = self.decode(batch, &cache.logits)?;
        let (d_hidden, dense) = self.dense.backward(cache.encoder.output(), &d_logits);
        let (d_embedded, encoder) = match (&self.encoder, &cache.encoder) {
            (Encoder::Uni(l), EncoderCache::Uni(c)) => {
                let (d, g) = l.backward(c, &batch.packing, &d_hidden);
                (d, Encoder::Uni(g))
            }
            (Encoder::Bi(l), EncoderCache::Bi(c)) => {
                let (d, g) = l.backward_pass(c, &batch.packing, &d_hidden);
                (d, Encoder::Bi(g))
            }
            _ => unreachable!("cache matches encoder"),
        };
        debug_assert_eq!(d_embedded.rows(), cache.embedded.rows());
        let embedding = self.embedding.backward(&batch.ids, &d_embedded);
        let grads = Tagger { config: self.config, embedding, encoder, dense, crf: crf_grads };
        Ok(BatchResult { loss, grads, predictions })
    }

    /// Predicts tags for unsorted id sequences (hyphens already removed),
    /// returned in input order. Batches are decoded in parallel.
    pub fn predict_ids(&self, seqs: &[Vec<usize>], batch_size: usize) -> Result<Vec<TagSequence>> {
        if let Some(pos) = seqs.iter().position(Vec::is_empty) {
            return Err(Error::InvalidWord(format!("input {pos} has no letters")));
        }
        let chunks: Vec<&[Vec<usize>]> = seqs.chunks(batch_size.max(1)).collect();
        let decoded = par::map(&chunks, |chunk| -> Result<Vec<TagSequence>> {
            let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
            let batch = PackedBatch::new(&refs, None)?;
            let cache = self.forward(&batch)?;
            let paths = self.decode(&batch, &cache.logits)?;
            let mut out = vec![None; chunk.len()];
            for (b, path) in paths.into_iter().enumerate() {
                let tags: Vec<Tag> = path.iter().map(|&j| Tag::from_index(j).unwrap_or(Tag::C)).collect();
                out[batch.order[b]] = Some(TagSequence::coerce(&tags, tags.len())?);
            }
            Ok(out.into_iter().map(|t| t.expect("every slot filled")).collect())
        });
        let mut all = Vec::with_capacity(seqs.len());
        for part in decoded {
            all.extend(part?);
        }
        Ok(all)
    }
}

impl Parameterized for Tagger {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("embedding", self.embedding.parameters());
        out.extend(match &self.encoder {
            Encoder::Uni(l) => prefixed("lstm", l.parameters()),
            Encoder::Bi(b) => prefixed("blstm", b.parameters()),
        });
        out.extend(prefixed("dense", self.dense.parameters()));
        if let Some(crf) = &self.crf {
            out.extend(prefixed("crf", crf.parameters()));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed("embedding", self.embedding.parameters_mut());
        out.extend(match &mut self.encoder {
            Encoder::Uni(l) => prefixed("lstm", l.parameters_mut()),
            Encoder::Bi(b) => prefixed("blstm", b.parameters_mut()),
        });
        out.extend(prefixed("dense", self.dense.parameters_mut()));
        if let Some(crf) = &mut self.crf {
            out.extend(prefixed("crf", crf.parameters_mut()));
        }
        out
    }
}
