//! Trained neural syllabifiers behind one interface for checkpointing and
//! word-level prediction.

use std::path::Path;

use crate::alphabet::normalize;
use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::tagger::{ModelKind, Tagger, TaggerConfig};
use crate::nn::vocab::Vocabulary;
use crate::seq2seq::attention::AttentionTrace;
use crate::seq2seq::{Seq2SeqConfig, Seq2SeqModel};
use crate::tagging::{decode_tags, Tag, TagSequence};

#[derive(Debug, Clone, PartialEq)]
pub enum Syllabifier {
    Tagger(Tagger),
    Seq2Seq(Seq2SeqModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPrediction {
    /// Normalized input.
    pub surface: String,
    /// Raw predicted tags; may disagree in length with the word for seq2seq.
    pub tags: Vec<Tag>,
    /// The syllabified word when `tags` form a valid sequence for it.
    pub word: Option<SyllabifiedWord>,
    pub trace: Option<AttentionTrace>,
}

impl Syllabifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Syllabifier::Tagger(t) => t.kind(),
            Syllabifier::Seq2Seq(_) => ModelKind::Seq2seq,
        }
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Result<Checkpoint> {
        let arch = self.kind().as_str();
        Ok(match self {
            Syllabifier::Tagger(t) => Checkpoint::from_model(arch, serde_json::to_value(t.config)?, vocab, t),
            Syllabifier::Seq2Seq(m) => Checkpoint::from_model(arch, serde_json::to_value(m.config)?, vocab, m),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind: ModelKind = ck.arch.parse()?;
        let model = if kind == ModelKind::Seq2seq {
            let cfg: Seq2SeqConfig = serde_json::from_value(ck.config.clone())?;
            check_vocab(cfg.source_vocab, &ck.vocab)?;
            let mut m = Seq2SeqModel::zeros(cfg)?;
            ck.load_into(&mut m)?;
            Syllabifier::Seq2Seq(m)
        } else {
            let cfg: TaggerConfig = serde_json::from_value(ck.config.clone())?;
            if cfg.kind != kind {
                return Err(Error::ArchitectureMismatch { expected: kind.to_string(), found: cfg.kind.to_string() });
            }
            check_vocab(cfg.vocab_size, &ck.vocab)?;
            let mut t = Tagger::zeros(cfg)?;
            ck.load_into(&mut t)?;
            Syllabifier::Tagger(t)
        };
        Ok(model)
    }

    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        self.to_checkpoint(vocab)?.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Vocabulary)> {
        let ck = Checkpoint::load(path)?;
        Ok((Self::from_checkpoint(&ck)?, ck.vocab))
    }

    /// Predicts every word; traces are filled for seq2seq only.
    pub fn predict(&self, vocab: &Vocabulary, words: &[&str], batch_size: usize) -> Result<Vec<WordPrediction>> {
        let surfaces: Vec<String> = words.iter().map(|w| normalize(w)).collect();
        match self {
            Syllabifier::Tagger(t) => {
                let ids = surfaces.iter().map(|s| vocab.encode(s, false)).collect::<Result<Vec<_>>>()?;
                let seqs = t.predict_ids(&ids, batch_size)?;
                surfaces
                    .into_iter()
                    .zip(seqs)
                    .map(|(surface, seq)| {
                        let word = Some(decode_tags(&surface, &seq)?);
                        Ok(WordPrediction { surface, tags: seq.tags().to_vec(), word, trace: None })
                    })
                    .collect()
            }
            Syllabifier::Seq2Seq(m) => {
                let refs: Vec<&str> = surfaces.iter().map(String::as_str).collect();
                let preds = m.predict_words(vocab, &refs, batch_size)?;
                Ok(surfaces
                    .into_iter()
                    .zip(preds)
                    .map(|(surface, p)| {
                        let tags = p.tags();
                        let word = TagSequence::new(tags.clone()).ok().and_then(|s| decode_tags(&surface, &s).ok());
                        WordPrediction { surface, tags, word, trace: Some(p.trace) }
                    })
                    .collect())
            }
        }
    }
}

fn check_vocab(expected: usize, vocab: &Vocabulary) -> Result<()> {
    if vocab.size() != expected {
        return Err(Error::Checkpoint(format!("vocabulary has {} symbols, model expects {expected}", vocab.size())));
    }
    Ok(())
}

/// Loads a checkpoint and predicts tags for one word.
pub fn predict_tags(checkpoint: &Path, surface: &str) -> Result<Vec<Tag>> {
    let (model, vocab) = Syllabifier::load(checkpoint)?;
    Ok(model.predict(&vocab, &[surface], 1)?.remove(0).tags)
}
