//! Syllabified corpus format, statistics and deterministic splits.
//!
//! A corpus file is UTF-8 text with one word per line and its syllables
//! separated by single spaces:
//!
//! ```text
//! ke nyü
//! ki lon ser -ko
//! ```

pub mod synth;

pub use synth::{synthesize_corpus, SynthesisConfig, MARKER_PROBABILITY};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{self, HYPHEN};
use crate::error::{Error, Result};
use crate::par;

/// A word together with its gold syllable decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyllabifiedWord {
    surface: String,
    syllables: Vec<String>,
    boundaries: Vec<usize>,
}

impl SyllabifiedWord {
    /// Builds a word from already-normalized syllables.
    pub fn from_syllables<S: AsRef<str>>(syllables: &[S]) -> Result<Self> {
        if syllables.is_empty() {
            return Err(Error::InvalidWord("no syllables".into()));
        }
        let mut surface = String::new();
        let mut boundaries = Vec::with_capacity(syllables.len());
        let mut owned = Vec::with_capacity(syllables.len());
        let mut offset = 0;
        for syl in syllables {
            let syl = syl.as_ref();
            check_syllable(syl, 0)?;
            boundaries.push(offset);
            offset += syl.chars().count();
            surface.push_str(syl);
            owned.push(syl.to_string());
        }
        Ok(Self { surface, syllables: owned, boundaries })
    }

    /// Parses one corpus line (syllables separated by single spaces).
    pub fn parse_line(line: &str) -> Result<Self> {
        parse_line(line, 0)
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn syllables(&self) -> &[String] {
        &self.syllables
    }

    /// Character offset of each syllable start in the surface.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len_chars(&self) -> usize {
        self.surface.chars().count()
    }

    /// Number of non-hyphen letters.
    pub fn letter_count(&self) -> usize {
        self.surface.chars().filter(|&c| c != HYPHEN).count()
    }

    pub fn syllable_count(&self) -> usize {
        self.syllables.len()
    }

    /// The corpus-line rendering: syllables joined by single spaces.
    pub fn to_line(&self) -> String {
        self.syllables.join(" ")
    }

    /// Syllables joined with `+`, as used in error tables.
    pub fn plus_joined(&self) -> String {
        self.syllables.join("+")
    }
}

impl fmt::Display for SyllabifiedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

fn check_syllable(syl: &str, line: usize) -> Result<()> {
    if syl.is_empty() {
        return Err(Error::EmptySyllable { line });
    }
    if let Some(ch) = syl.chars().find(|&c| c != HYPHEN && !alphabet::is_letter(c)) {
        return Err(Error::InvalidChar { line, ch });
    }
    if syl.ends_with(HYPHEN) {
        return Err(Error::TrailingHyphen { line, syllable: syl.to_string() });
    }
    Ok(())
}

fn parse_line(raw: &str, line: usize) -> Result<SyllabifiedWord> {
    let norm = alphabet::normalize(raw.trim_end_matches(['\r', '\n']));
    if let Some(ch) = norm.chars().find(|&c| c != ' ' && c != HYPHEN && !alphabet::is_letter(c)) {
        return Err(Error::InvalidChar { line, ch });
    }
    let syllables: Vec<&str> = norm.split(' ').collect();
    for syl in &syllables {
        check_syllable(syl, line)?;
    }
    SyllabifiedWord::from_syllables(&syllables).map_err(|e| match e {
        Error::EmptySyllable { .. } => Error::EmptySyllable { line },
        other => other,
    })
}

/// Parses a whole corpus document. Blank lines are skipped; errors carry
/// 1-based line numbers.
pub fn parse_corpus(text: &str) -> Result<Vec<SyllabifiedWord>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    par::map(&lines, |&(n, l)| parse_line(l, n)).into_iter().collect()
}

/// Renders words in corpus format, one per line with a trailing newline.
pub fn format_corpus(words: &[SyllabifiedWord]) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(&w.to_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub word_count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
}

/// Surface-length statistics; hyphens count as characters.
pub fn corpus_stats(words: &[SyllabifiedWord]) -> Result<CorpusStats> {
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lens: Vec<usize> = words.iter().map(SyllabifiedWord::len_chars).collect();
    let total: usize = lens.iter().sum();
    Ok(CorpusStats {
        word_count: words.len(),
        min_len: *lens.iter().min().unwrap(),
        max_len: *lens.iter().max().unwrap(),
        mean_len: total as f64 / words.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, valid_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let spec = Self { train_frac, valid_frac, test_frac, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// 80/10/10.
    pub fn standard(seed: u64) -> Self {
        Self { train_frac: 0.8, valid_frac: 0.1, test_frac: 0.1, seed }
    }

    /// Parses ratios such as `80:10:10` (any positive scale).
    pub fn parse_ratio(ratio: &str, seed: u64) -> Result<Self> {
        let parts: Vec<f64> = ratio
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidSplit(format!("cannot parse {ratio:?}")))?;
        if parts.len() != 3 {
            return Err(Error::InvalidSplit(format!("expected three parts in {ratio:?}")));
        }
        let total: f64 = parts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidSplit(format!("ratio {ratio:?} sums to zero")));
        }
        Self::new(parts[0] / total, parts[1] / total, parts[2] / total, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.valid_frac, self.test_frac];
        if fracs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidSplit("fractions must be positive".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }

    /// Partition sizes for `n` items: valid and test are floored, train
    /// takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let valid = floor(self.valid_frac);
        let test = floor(self.test_frac);
        (n - valid - test, valid, test)
    }
}

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a contiguous train/valid/test partition.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let (n_train, n_valid, _) = spec.sizes(items.len());
    let take = |range: &[usize]| range.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: take(&order[..n_train]),
        valid: take(&order[n_train..n_train + n_valid]),
        test: take(&order[n_train + n_valid..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(line: &str) -> SyllabifiedWord {
        SyllabifiedWord::parse_line(line).unwrap()
    }

    #[test]
    fn parses_published_examples() {
        let w = word("ke nyü");
        assert_eq!(w.surface(), "kenyü");
        assert_eq!(w.syllables(), ["ke", "nyü"]);
        assert_eq!(w.boundaries(), [0, 2]);

        let w = word("a");
        assert_eq!(w.surface(), "a");
        assert_eq!(w.syllables(), ["a"]);

        let w = word("ki lon ser -ko");
        assert_eq!(w.surface(), "kilonser-ko");
        assert_eq!(w.syllable_count(), 4);
        assert_eq!(w.syllables().last().unwrap(), "-ko");
        assert_eq!(w.letter_count(), 10);
    }

    #[test]
    fn rejects_bad_lines_with_line_numbers() {
        match parse_corpus("ke nyü\nqa\n") {
            Err(Error::InvalidChar { line: 2, ch: 'q' }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_corpus("ke  nyü") {
            Err(Error::EmptySyllable { line: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_corpus("a\nke- nyü") {
            Err(Error::TrailingHyphen { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_corpus("-"), Err(Error::TrailingHyphen { .. })));
    }

    #[test]
    fn ingestion_normalizes_case_and_umlaut() {
        let words = parse_corpus("KE NYU\u{0308}\r\n\n").unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].surface(), "kenyü");
    }

    #[test]
    fn stats() {
        assert!(matches!(corpus_stats(&[]), Err(Error::EmptyCorpus)));
        let s = corpus_stats(&[word("ba")]).unwrap();
        assert_eq!((s.min_len, s.max_len, s.mean_len), (2, 2, 2.0));
        let s = corpus_stats(&[word("ba"), word("ki lon ser -ko")]).unwrap();
        assert_eq!((s.word_count, s.min_len, s.max_len), (2, 2, 11));
        assert!((s.mean_len - 6.5).abs() < 1e-12);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"word_count":2,"min_len":2,"max_len":11,"mean_len":6.5}"#);
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::standard(7);
        assert_eq!(spec.sizes(10_120), (8_096, 1_012, 1_012));
        assert_eq!(spec.sizes(10), (8, 1, 1));
        let items: Vec<u32> = (0..10).collect();
        let a = split(&items, &spec).unwrap();
        let b = split(&items, &spec).unwrap();
        assert_eq!((a.train.len(), a.valid.len(), a.test.len()), (8, 1, 1));
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::new(0.8, 0.2, 0.0, 0).is_err());
        assert!(SplitSpec::new(0.8, 0.1, 0.2, 0).is_err());
        let s = SplitSpec::parse_ratio("80:10:10", 3).unwrap();
        assert!((s.train_frac - 0.8).abs() < 1e-12);
        assert!(SplitSpec::parse_ratio("80:20", 3).is_err());
        assert!(split::<u8>(&[], &SplitSpec::standard(0)).is_err());
    }

    fn syllable_strategy() -> impl Strategy<Value = String> {
        let letters: Vec<char> = alphabet::LETTERS.to_vec();
        (any::<bool>(), proptest::collection::vec(proptest::sample::select(letters), 1..4))
            .prop_map(|(marker, ls)| {
                let body: String = ls.into_iter().collect();
                if marker {
                    format!("-{body}")
                } else {
                    body
                }
            })
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(
            words in proptest::collection::vec(
                proptest::collection::vec(syllable_strategy(), 1..6), 1..20)
        ) {
            let words: Vec<SyllabifiedWord> = words
                .iter()
                .map(|s| SyllabifiedWord::from_syllables(s).unwrap())
                .collect();
            let text = format_corpus(&words);
            let parsed = parse_corpus(&text).unwrap();
            prop_assert_eq!(&parsed, &words);
            prop_assert_eq!(format_corpus(&parsed), text);
            for w in &parsed {
                let total: usize = w.syllables().iter().map(|s| s.chars().count()).sum();
                prop_assert_eq!(total, w.len_chars());
            }
        }

        #[test]
        fn split_is_a_partition(n in 3usize..400, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let s = split(&items, &SplitSpec::standard(seed)).unwrap();
            let mut all: Vec<usize> =
                s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }
}
