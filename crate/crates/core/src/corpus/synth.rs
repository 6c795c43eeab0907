//! Synthetic corpus generator driven by a weighted syllable inventory.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SyllabifiedWord;
use crate::alphabet::{self, HYPHEN};
use crate::error::{Error, Result};

/// Probability that a generated word receives a word-final marker syllable.
pub const MARKER_PROBABILITY: f64 = 0.15;

/// The 50 most frequent syllables of the annotated Tenyidie corpus with their
/// occurrence counts. `-u` is the only marker among them.
const TOP_50: [(&str, u64); 50] = [
    ("ke", 5625),
    ("lie", 1639),
    ("ta", 1372),
    ("shü", 1269),
    ("pe", 1039),
    ("tuo", 994),
    ("cü", 908),
    ("u", 862),
    ("ko", 835),
    ("ya", 784),
    ("me", 737),
    ("wa", 737),
    ("mia", 556),
    ("rü", 512),
    ("chü", 491),
    ("zhü", 467),
    ("the", 459),
    ("mha", 416),
    ("te", 395),
    ("zha", 342),
    ("se", 287),
    ("tho", 280),
    ("ki", 243),
    ("pfü", 230),
    ("pie", 220),
    ("si", 197),
    ("vi", 192),
    ("le", 185),
    ("la", 185),
    ("thor", 185),
    ("tha", 179),
    ("zhie", 178),
    ("va", 174),
    ("ba", 172),
    ("sie", 168),
    ("nuo", 167),
    ("suo", 167),
    ("puo", 166),
    ("mo", 165),
    ("-u", 163),
    ("sa", 161),
    ("cha", 159),
    ("tsa", 157),
    ("kha", 149),
    ("pu", 142),
    ("die", 139),
    ("ze", 139),
    ("di", 129),
    ("kra", 129),
    ("jü", 127),
];

/// Published mean surface length of the annotated corpus.
pub const PUBLISHED_MEAN_LEN: f64 = 8.58;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub syllable_table: Vec<(String, u64)>,
    pub marker_table: Vec<(String, u64)>,
    pub target_mean_len: f64,
    pub word_count: usize,
    pub seed: u64,
    #[serde(default = "default_marker_probability")]
    pub marker_probability: f64,
    /// Forces every word to this many (non-marker) syllables.
    #[serde(default)]
    pub fixed_syllable_count: Option<usize>,
}

fn default_marker_probability() -> f64 {
    MARKER_PROBABILITY
}

impl SynthesisConfig {
    /// The published top-50 inventory, markers split off into their own table.
    pub fn published(word_count: usize, seed: u64) -> Self {
        let (markers, syllables): (Vec<_>, Vec<_>) = TOP_50
            .iter()
            .map(|&(s, f)| (s.to_string(), f))
            .partition(|(s, _)| s.starts_with(HYPHEN));
        Self {
            syllable_table: syllables,
            marker_table: markers,
            target_mean_len: PUBLISHED_MEAN_LEN,
            word_count,
            seed,
            marker_probability: MARKER_PROBABILITY,
            fixed_syllable_count: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthesis(msg));
        if self.syllable_table.is_empty() {
            return bad("empty syllable table".into());
        }
        for (syl, freq) in &self.syllable_table {
            if *freq == 0 {
                return bad(format!("syllable {syl:?} has zero frequency"));
            }
            if syl.is_empty() || !syl.chars().all(alphabet::is_letter) {
                return bad(format!("syllable {syl:?} must be non-empty letters only"));
            }
        }
        for (m, freq) in &self.marker_table {
            if *freq == 0 {
                return bad(format!("marker {m:?} has zero frequency"));
            }
            let mut chars = m.chars();
            if chars.next() != Some(HYPHEN) || !chars.as_str().chars().all(alphabet::is_letter)
                || chars.as_str().is_empty()
            {
                return bad(format!("marker {m:?} must be a hyphen followed by letters"));
            }
        }
        if !(0.0..=1.0).contains(&self.marker_probability) {
            return bad("marker probability outside [0, 1]".into());
        }
        if self.fixed_syllable_count == Some(0) {
            return bad("fixed syllable count must be at least 1".into());
        }
        Ok(())
    }

    fn mean_len(table: &[(String, u64)]) -> f64 {
        let total: u64 = table.iter().map(|(_, f)| f).sum();
        let weighted: f64 =
            table.iter().map(|(s, f)| s.chars().count() as f64 * *f as f64).sum();
        if total == 0 {
            0.0
        } else {
            weighted / total as f64
        }
    }

    /// Mean of the geometric syllable-count distribution that makes the
    /// expected surface length equal `target_mean_len` (at least 1).
    pub fn mean_syllable_count(&self) -> f64 {
        let syl = Self::mean_len(&self.syllable_table);
        let marker = if self.marker_table.is_empty() {
            0.0
        } else {
            self.marker_probability * Self::mean_len(&self.marker_table)
        };
        ((self.target_mean_len - marker) / syl).max(1.0)
    }
}

/// Generates `cfg.word_count` words. Each word draws k ≥ 1 syllables in
/// proportion to their frequency, k geometric unless fixed, and with
/// probability `marker_probability` a marker syllable is appended.
pub fn synthesize_corpus(cfg: &SynthesisConfig) -> Result<Vec<SyllabifiedWord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let syllables = WeightedIndex::new(cfg.syllable_table.iter().map(|(_, f)| *f))
        .map_err(|e| Error::InvalidSynthesis(e.to_string()))?;
    let markers = if cfg.marker_table.is_empty() {
        None
    } else {
        Some(
            WeightedIndex::new(cfg.marker_table.iter().map(|(_, f)| *f))
                .map_err(|e| Error::InvalidSynthesis(e.to_string()))?,
        )
    };
    let stop = 1.0 / cfg.mean_syllable_count();

    let mut words = Vec::with_capacity(cfg.word_count);
    let mut parts: Vec<&str> = Vec::new();
    for _ in 0..cfg.word_count {
        parts.clear();
        let k = match cfg.fixed_syllable_count {
            Some(k) => k,
            None => {
                let mut k = 1;
                while rng.gen::<f64>() >= stop {
                    k += 1;
                }
                k
            }
        };
        for _ in 0..k {
            parts.push(&cfg.syllable_table[syllables.sample(&mut rng)].0);
        }
        if let Some(markers) = &markers {
            if rng.gen::<f64>() < cfg.marker_probability {
                parts.push(&cfg.marker_table[markers.sample(&mut rng)].0);
            }
        }
        words.push(SyllabifiedWord::from_syllables(&parts)?);
    }
    Ok(words)
}
