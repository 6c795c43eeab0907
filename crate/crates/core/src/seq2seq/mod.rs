//! Attention encoder-decoder that reads a word character by character
//! (hyphens included) and emits its tag sequence followed by `EOS`.
//!
//! The encoder is a bidirectional GRU over packed sources. The decoder
//! state starts from `tanh(W·[h_fwd_last; h_bwd_first] + b)`; each step feeds
//! `[embed(previous token); attention context]` to a GRU cell and projects
//! the new state onto the five target classes.

pub mod attention;
pub mod gru;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::normalize;
use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::layers::{softmax_cross_entropy, Dense, Embedding};
use crate::nn::lstm::prefixed;
use crate::nn::packing::Packing;
use crate::nn::train::{EpochMetrics, TrainConfig};
use crate::nn::vocab::Vocabulary;
use crate::nn::{Parameterized, Tensor};
use crate::par;
use crate::tagging::{encode_tags, Tag, TagSequence};
use attention::{Attention, AttentionStep, AttentionTrace};
use gru::{BiGru, BiGruRun, GruCell, GruStep};

pub const TARGET_S: usize = 0;
pub const TARGET_C: usize = 1;
pub const GO: usize = 2;
pub const EOS: usize = 3;
pub const TARGET_PAD: usize = 4;
pub const TARGET_VOCAB: usize = 5;

pub fn target_label(token: usize) -> &'static str {
    match token {
        TARGET_S => "S",
        TARGET_C => "C",
        GO => "GO",
        EOS => "EOS",
        _ => "PAD",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub source_vocab: usize,
    pub embedding_dim: usize,
    /// Units per encoder direction and in the decoder.
    pub units: usize,
    pub attention_dim: usize,
}

impl Seq2SeqConfig {
    /// 27 source symbols, 128-wide embeddings, 512 recurrent units.
    pub fn published() -> Self {
        Self { source_vocab: 27, embedding_dim: 128, units: 512, attention_dim: 512 }
    }

    pub fn from_train_config(cfg: &TrainConfig) -> Self {
        Self { source_vocab: 27, embedding_dim: cfg.embedding_dim, units: cfg.hidden_dim, attention_dim: cfg.hidden_dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_vocab == 0 || self.embedding_dim == 0 || self.units == 0 || self.attention_dim == 0 {
            return Err(Error::Config("seq2seq dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub config: Seq2SeqConfig,
    pub source_embedding: Embedding,
    pub encoder: BiGru,
    pub bridge: Dense,
    pub target_embedding: Embedding,
    pub attention: Attention,
    pub decoder: GruCell,
    pub output: Dense,
}

/// Source ids (hyphens kept) and gold tag classes of one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seq2SeqExample {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Seq2SeqExample {
    pub fn from_word(word: &SyllabifiedWord, vocab: &Vocabulary) -> Result<Self> {
        Ok(Self {
            source: vocab.encode(word.surface(), true)?,
            target: encode_tags(word)?.tags().iter().map(|t| t.index()).collect(),
        })
    }
}

pub fn prepare_seq2seq(words: &[SyllabifiedWord], vocab: &Vocabulary) -> Result<Vec<Seq2SeqExample>> {
    words.iter().map(|w| Seq2SeqExample::from_word(w, vocab)).collect()
}

struct Encoded {
    order: Vec<usize>,
    packing: Packing,
    ids: Vec<usize>,
    run: BiGruRun,
    rows: Vec<Vec<usize>>,
    bridge_in: Tensor,
    s0: Tensor,
    keys: Tensor,
}

struct DecoderStep {
    inputs: Vec<usize>,
    x: Tensor,
    attention: AttentionStep,
    gru: GruStep,
    logits: Tensor,
}

/// Loss and gradients of one teacher-forced batch.
pub struct Seq2SeqBatchResult {
    pub loss: f64,
    pub grads: Seq2SeqModel,
    pub correct_tokens: usize,
    pub tokens: usize,
}

/// Greedy output for one word.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqPrediction {
    /// Every emitted token, including a final `EOS` when one was produced.
    pub tokens: Vec<usize>,
    pub trace: AttentionTrace,
}

impl Seq2SeqPrediction {
    /// Emitted tags before the first `EOS`.
    pub fn tags(&self) -> Vec<Tag> {
        self.tokens.iter().take_while(|&&t| t != EOS).filter_map(|&t| Tag::from_index(t)).collect()
    }

    pub fn ended(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// The emitted tags when they form a valid sequence of `letters` tags.
    pub fn tag_sequence(&self, letters: usize) -> Option<TagSequence> {
        let tags = self.tags();
        (tags.len() == letters).then(|| TagSequence::new(tags).ok()).flatten()
    }
}

/// Restricted argmax over `S`, `C` and `EOS`; ties go to the lower index.
fn emit(row: &[f64]) -> usize {
    [TARGET_S, TARGET_C, EOS].into_iter().fold(TARGET_S, |best, j| if row[j] > row[best] { j } else { best })
}

impl Seq2SeqModel {
    pub fn new<R: Rng>(rng: &mut R, config: Seq2SeqConfig) -> Result<Self> {
        config.validate()?;
        let (e, u) = (config.embedding_dim, config.units);
        Ok(Self {
            config,
            source_embedding: Embedding::new(rng, config.source_vocab, e),
            encoder: BiGru::new(rng, e, u),
            bridge: Dense::new(rng, 2 * u, u),
            target_embedding: Embedding::new(rng, TARGET_VOCAB, e),
            attention: Attention::new(rng, 2 * u, u, config.attention_dim),
            decoder: GruCell::new(rng, e + 2 * u, u),
            output: Dense::new(rng, u, TARGET_VOCAB),
        })
    }

    pub fn zeros(config: Seq2SeqConfig) -> Result<Self> {
        config.validate()?;
        let (e, u) = (config.embedding_dim, config.units);
        Ok(Self {
            config,
            source_embedding: Embedding::zeros(config.source_vocab, e),
            encoder: BiGru::zeros(e, u),
            bridge: Dense::zeros(2 * u, u),
            target_embedding: Embedding::zeros(TARGET_VOCAB, e),
            attention: Attention::zeros(2 * u, u, config.attention_dim),
            decoder: GruCell::zeros(e + 2 * u, u),
            output: Dense::zeros(u, TARGET_VOCAB),
        })
    }

    fn encode_batch(&self, sources: &[&[usize]]) -> Result<Encoded> {
        if sources.iter().any(|s| s.is_empty()) {
            return Err(Error::EmptyInput);
        }
        let u = self.config.units;
        let lens: Vec<usize> = sources.iter().map(|s| s.len()).collect();
        let order = Packing::sort_order(&lens);
        let sorted: Vec<usize> = order.iter().map(|&i| lens[i]).collect();
        let packing = Packing::new(&sorted)?;
        let rows: Vec<Vec<usize>> = (0..sources.len()).map(|b| packing.sequence_rows(b).collect()).collect();
        let mut ids = vec![0; packing.total()];
        for (b, &i) in order.iter().enumerate() {
            for (t, &r) in rows[b].iter().enumerate() {
                ids[r] = sources[i][t];
            }
        }
        let embedded = self.source_embedding.lookup(&ids)?;
        let run = self.encoder.run(&embedded, &packing)?;
        let mut bridge_in = Tensor::zeros(&[sources.len(), 2 * u]);
        for (b, r) in rows.iter().enumerate() {
            let dst = bridge_in.row_mut(b);
            dst[..u].copy_from_slice(&run.output.row(r[r.len() - 1])[..u]);
            dst[u..].copy_from_slice(&run.output.row(r[0])[u..]);
        }
        let mut s0 = self.bridge.forward(&bridge_in)?;
        s0.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let keys = self.attention.keys(&run.output);
        Ok(Encoded { order, packing, ids, run, rows, bridge_in, s0, keys })
    }

    /// Per-character context vectors `[T, 2·units]` for one source.
    pub fn encode(&self, ids: &[usize]) -> Result<Tensor> {
        Ok(self.encode_batch(&[ids])?.run.output)
    }

    fn decoder_step(&self, enc: &Encoded, state: &Tensor, inputs: Vec<usize>) -> Result<DecoderStep> {
        let attention = self.attention.step(&enc.keys, &enc.run.output, &enc.rows, state);
        let x = self.target_embedding.lookup(&inputs)?.hconcat(&attention.context);
        let gru = self.decoder.step(x.view(), Some(state.view()))?;
        let logits = self.output.forward(&gru.h)?;
        Ok(DecoderStep { inputs, x, attention, gru, logits })
    }

    /// Teacher-forced pass: returns encoder state, decoder steps, decoder
    /// states (`states[t]` feeds step `t`), gold classes and mask per
    /// `(step, row)`.
    #[allow(clippy::type_complexity)]
    fn teacher_forced(
        &self,
        batch: &[&Seq2SeqExample],
    ) -> Result<(Encoded, Vec<DecoderStep>, Vec<Tensor>, Vec<usize>, Vec<bool>)> {
        for ex in batch {
            if ex.target.iter().any(|&t| t > TARGET_C) {
                return Err(Error::Config("targets must be S/C classes".into()));
            }
        }
        let sources: Vec<&[usize]> = batch.iter().map(|e| e.source.as_slice()).collect();
        let enc = self.encode_batch(&sources)?;
        let targets: Vec<Vec<usize>> = enc
            .order
            .iter()
            .map(|&i| batch[i].target.iter().copied().chain([EOS]).collect())
            .collect();
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        let n = batch.len();
        let mut gold = vec![TARGET_PAD; steps * n];
        let mut mask = vec![false; steps * n];
        let mut states = vec![enc.s0.clone()];
        let mut dec = Vec::with_capacity(steps);
        for t in 0..steps {
            let inputs: Vec<usize> = targets
                .iter()
                .map(|y| match t {
                    0 => GO,
                    _ => y.get(t - 1).copied().unwrap_or(TARGET_PAD),
                })
                .collect();
            for (b, y) in targets.iter().enumerate() {
                if let Some(&g) = y.get(t) {
                    gold[t * n + b] = g;
                    mask[t * n + b] = true;
                }
            }
            let step = self.decoder_step(&enc, &states[t], inputs)?;
            states.push(step.gru.h.clone());
            dec.push(step);
        }
        Ok((enc, dec, states, gold, mask))
    }

    fn stacked_logits(dec: &[DecoderStep]) -> Tensor {
        let rows: usize = dec.iter().map(|s| s.logits.rows()).sum();
        let data = dec.iter().flat_map(|s| s.logits.data().iter().copied()).collect();
        Tensor::from_vec(&[rows, TARGET_VOCAB], data).expect("stacked logits")
    }

    fn token_hits(logits: &Tensor, gold: &[usize], mask: &[bool]) -> (usize, usize) {
        let mut hits = 0;
        for (r, (&g, &m)) in gold.iter().zip(mask).enumerate() {
            hits += usize::from(m && emit(logits.row(r)) == g);
        }
        (hits, mask.iter().filter(|&&m| m).count())
    }

    /// Mean masked cross-entropy over real target positions (tags + `EOS`).
    pub fn loss(&self, batch: &[&Seq2SeqExample]) -> Result<f64> {
        Ok(self.evaluate_batch(batch)?.0)
    }

    /// Loss plus correct and total teacher-forced tokens.
    pub fn evaluate_batch(&self, batch: &[&Seq2SeqExample]) -> Result<(f64, usize, usize)> {
        let (_, dec, _, gold, mask) = self.teacher_forced(batch)?;
        let logits = Self::stacked_logits(&dec);
        let (loss, _) = softmax_cross_entropy(&logits, &gold, Some(&mask))?;
        let (hits, total) = Self::token_hits(&logits, &gold, &mask);
        Ok((loss, hits, total))
    }

    pub fn train_batch(&self, batch: &[&Seq2SeqExample]) -> Result<Seq2SeqBatchResult> {
        let (enc, dec, states, gold, mask) = self.teacher_forced(batch)?;
        let logits = Self::stacked_logits(&dec);
        let (loss, d_logits) = softmax_cross_entropy(&logits, &gold, Some(&mask))?;
        let (correct_tokens, tokens) = Self::token_hits(&logits, &gold, &mask);

        let (n, u, e) = (batch.len(), self.config.units, self.config.embedding_dim);
        let mut g = Seq2SeqModel::zeros(self.config)?;
        let mut d_keys = enc.keys.zeros_like();
        let mut d_ctx = enc.run.output.zeros_like();
        let mut ds_next = Tensor::zeros(&[n, u]);
        for (t, step) in dec.iter().enumerate().rev() {
            let d_step = Tensor::from_vec(&[n, TARGET_VOCAB], d_logits.rows_slice(t * n, (t + 1) * n).to_vec())?;
            let (mut d_h, g_out) = self.output.backward(&step.gru.h, &d_step);
            g.output.kernel.add_assign(&g_out.kernel);
            g.output.bias.add_assign(&g_out.bias);
            d_h.add_assign(&ds_next);
            let (dx, d_prev) =
                self.decoder.step_backward(step.x.view(), Some(states[t].view()), &step.gru, &d_h, &mut g.decoder);
            let (d_temb, d_att) = dx.hsplit(e);
            g.target_embedding.table.add_assign(&self.target_embedding.backward(&step.inputs, &d_temb).table);
            let d_s_att = self.attention.step_backward(
                &enc.run.output,
                &enc.rows,
                &states[t],
                &step.attention,
                &d_att,
                &mut g.attention,
                &mut d_keys,
                &mut d_ctx,
            );
            ds_next = d_prev.expect("decoder always has a previous state");
            ds_next.add_assign(&d_s_att);
        }
        self.attention.keys_backward(&enc.run.output, &d_keys, &mut g.attention, &mut d_ctx);
        let mut d_pre = ds_next;
        for (d, s) in d_pre.data_mut().iter_mut().zip(enc.s0.data()) {
            *d *= 1.0 - s * s;
        }
        let (d_bridge_in, g_bridge) = self.bridge.backward(&enc.bridge_in, &d_pre);
        g.bridge = g_bridge;
        for (b, r) in enc.rows.iter().enumerate() {
            let src = d_bridge_in.row(b);
            for (d, s) in d_ctx.row_mut(r[r.len() - 1])[..u].iter_mut().zip(&src[..u]) {
                *d += s;
            }
            for (d, s) in d_ctx.row_mut(r[0])[u..].iter_mut().zip(&src[u..]) {
                *d += s;
            }
        }
        let d_emb = self.encoder.run_backward(&enc.run, &enc.packing, &d_ctx, &mut g.encoder);
        g.source_embedding = self.source_embedding.backward(&enc.ids, &d_emb);
        Ok(Seq2SeqBatchResult { loss, grads: g, correct_tokens, tokens })
    }

    /// Greedy decoding of a batch of id sequences. Each word stops at `EOS`
    /// or after `2·len` tokens. Returns tokens and attention rows per word,
    /// in input order.
    pub fn decode_ids(&self, sources: &[&[usize]]) -> Result<Vec<(Vec<usize>, Vec<Vec<f64>>)>> {
        let enc = self.encode_batch(sources)?;
        let n = sources.len();
        let caps: Vec<usize> = enc.order.iter().map(|&i| 2 * sources[i].len()).collect();
        let mut out: Vec<(Vec<usize>, Vec<Vec<f64>>)> = vec![(Vec::new(), Vec::new()); n];
        let mut done = vec![false; n];
        let mut inputs = vec![GO; n];
        let mut state = enc.s0.clone();
        while done.iter().any(|d| !d) {
            let step = self.decoder_step(&enc, &state, inputs.clone())?;
            for b in 0..n {
                if done[b] {
                    continue;
                }
                let tok = emit(step.logits.row(b));
                out[b].0.push(tok);
                out[b].1.push(step.attention.weights[b].clone());
                done[b] = tok == EOS || out[b].0.len() >= caps[b];
                inputs[b] = if done[b] { TARGET_PAD } else { tok };
            }
            state = step.gru.h;
        }
        let mut ordered = vec![(Vec::new(), Vec::new()); n];
        for (b, &i) in enc.order.iter().enumerate() {
            ordered[i] = std::mem::take(&mut out[b]);
        }
        Ok(ordered)
    }

    /// Greedy decoding of surface words with attention traces; batches are
    /// decoded in parallel.
    pub fn predict_words(&self, vocab: &Vocabulary, words: &[&str], batch_size: usize) -> Result<Vec<Seq2SeqPrediction>> {
        let normalized: Vec<String> = words.iter().map(|w| normalize(w)).collect();
        let ids = normalized.iter().map(|w| vocab.encode(w, true)).collect::<Result<Vec<_>>>()?;
        if ids.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        let chunks: Vec<&[Vec<usize>]> = ids.chunks(batch_size.max(1)).collect();
        let decoded = par::map(&chunks, |chunk| {
            let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
            self.decode_ids(&refs)
        });
        let mut out = Vec::with_capacity(words.len());
        for part in decoded {
            for (tokens, weights) in part? {
                let w = &normalized[out.len()];
                let trace = AttentionTrace {
                    source: w.chars().collect(),
                    emitted: tokens.iter().map(|&t| target_label(t).to_string()).collect(),
                    weights,
                };
                out.push(Seq2SeqPrediction { tokens, trace });
            }
        }
        Ok(out)
    }

    pub fn decode_greedy(&self, vocab: &Vocabulary, surface: &str) -> Result<Seq2SeqPrediction> {
        Ok(self.predict_words(vocab, &[surface], 1)?.remove(0))
    }
}

impl Parameterized for Seq2SeqModel {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("source_embedding", self.source_embedding.parameters());
        out.extend(prefixed("encoder", self.encoder.parameters()));
        out.extend(prefixed("bridge", self.bridge.parameters()));
        out.extend(prefixed("target_embedding", self.target_embedding.parameters()));
        out.extend(prefixed("attention", self.attention.parameters()));
        out.extend(prefixed("decoder", self.decoder.parameters()));
        out.extend(prefixed("output", self.output.parameters()));
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed("source_embedding", self.source_embedding.parameters_mut());
        out.extend(prefixed("encoder", self.encoder.parameters_mut()));
        out.extend(prefixed("bridge", self.bridge.parameters_mut()));
        out.extend(prefixed("target_embedding", self.target_embedding.parameters_mut()));
        out.extend(prefixed("attention", self.attention.parameters_mut()));
        out.extend(prefixed("decoder", self.decoder.parameters_mut()));
        out.extend(prefixed("output", self.output.parameters_mut()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Seq2SeqOutcome {
    pub model: Seq2SeqModel,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

/// Teacher-forced loss, token accuracy and greedy word accuracy on `data`.
pub fn evaluate_seq2seq(model: &Seq2SeqModel, data: &[Seq2SeqExample], batch_size: usize) -> Result<(f64, f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let chunks: Vec<&[Seq2SeqExample]> = data.chunks(batch_size.max(1)).collect();
    let scored = par::map(&chunks, |chunk| -> Result<(f64, usize, usize, usize)> {
        let refs: Vec<&Seq2SeqExample> = chunk.iter().collect();
        let (loss, hits, total) = model.evaluate_batch(&refs)?;
        let sources: Vec<&[usize]> = chunk.iter().map(|e| e.source.as_slice()).collect();
        let decoded = model.decode_ids(&sources)?;
        let words = chunk
            .iter()
            .zip(&decoded)
            .filter(|(ex, (tokens, _))| tokens.len() == ex.target.len() + 1 && tokens[..ex.target.len()] == ex.target[..])
            .count();
        Ok((loss, hits, total, words))
    });
    let (mut loss, mut hits, mut total, mut words) = (0.0, 0, 0, 0);
    for item in scored {
        let (l, h, t, w) = item?;
        loss += l * t as f64;
        hits += h;
        total += t;
        words += w;
    }
    Ok((loss / total as f64, hits as f64 / total as f64, words as f64 / data.len() as f64))
}

/// Trains with teacher forcing and Adam; keeps the epoch with the best
/// greedy validation word accuracy (ties to lower validation loss).
pub fn train_seq2seq<F: FnMut(&EpochMetrics)>(
    train: &[Seq2SeqExample],
    valid: &[Seq2SeqExample],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Seq2SeqOutcome> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Seq2SeqModel::new(&mut rng, Seq2SeqConfig::from_train_config(cfg))?;
    let mut adam = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Seq2SeqModel, usize, f64, f64)> = None;
    let diverged = |epoch: usize, loss: f64| Error::Diverged { epoch, loss };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits, mut tokens) = (0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Seq2SeqExample> = chunk.iter().map(|&i| &train[i]).collect();
            let r = model.train_batch(&refs).map_err(|e| match e {
                Error::NonFinite { .. } => diverged(epoch, f64::NAN),
                other => other,
            })?;
            if !r.loss.is_finite() {
                return Err(diverged(epoch, r.loss));
            }
            loss_sum += r.loss * r.tokens as f64;
            hits += r.correct_tokens;
            tokens += r.tokens;
            adam.step(model.parameters_mut(), &r.grads.parameters_owned()).map_err(|_| diverged(epoch, r.loss))?;
        }
        let (valid_loss, valid_acc, valid_word_acc) =
            evaluate_seq2seq(&model, valid, cfg.batch_size).map_err(|e| match e {
                Error::NonFinite { .. } => diverged(epoch, f64::NAN),
                other => other,
            })?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / tokens as f64,
            train_acc: hits as f64 / tokens as f64,
            valid_loss,
            valid_acc,
            valid_word_acc,
        };
        on_epoch(&metrics);
        history.push(metrics);
        let improves = best
            .as_ref()
            .is_none_or(|(_, _, w, l)| valid_word_acc > *w || (valid_word_acc == *w && valid_loss < *l));
        if improves {
            best = Some((model.clone(), epoch, valid_word_acc, valid_loss));
        }
    }
    let (model, best_epoch, _, _) = best.expect("at least one epoch");
    Ok(Seq2SeqOutcome { model, best_epoch, history })
}
