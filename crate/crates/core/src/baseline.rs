//! Inventory-driven reference syllabifier.
//!
//! Depth-first search over a set of known syllables, longest match first,
//! backtracking on dead ends. The first complete segmentation is returned.

use std::collections::BTreeSet;

use crate::alphabet::HYPHEN;
use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyllableInventory {
    syllables: BTreeSet<String>,
    max_len: usize,
}

impl SyllableInventory {
    pub fn new<I, S>(syllables: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let syllables: BTreeSet<String> = syllables.into_iter().map(Into::into).collect();
        if syllables.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(bad) = syllables.iter().find(|s| s.is_empty() || s.ends_with(HYPHEN)) {
            return Err(Error::InvalidWord(format!("inventory entry {bad:?}")));
        }
        let max_len = syllables.iter().map(|s| s.chars().count()).max().unwrap_or(0);
        Ok(Self { syllables, max_len })
    }

    pub fn contains(&self, syllable: &str) -> bool {
        self.syllables.contains(syllable)
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.syllables.iter().map(String::as_str)
    }
}

/// Every gold syllable seen in the training words.
pub fn build_inventory(train: &[SyllabifiedWord]) -> Result<SyllableInventory> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    SyllableInventory::new(train.iter().flat_map(|w| w.syllables().iter().cloned()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segmentation {
    /// Exactly one complete parse exists.
    Unique(SyllabifiedWord),
    /// Several parses exist; `word` is the longest-first one.
    Ambiguous { word: SyllabifiedWord, parses: u64 },
    /// No combination of inventory entries covers the surface.
    NoParse,
}

impl Segmentation {
    pub fn word(&self) -> Option<&SyllabifiedWord> {
        match self {
            Segmentation::Unique(w) | Segmentation::Ambiguous { word: w, .. } => Some(w),
            Segmentation::NoParse => None,
        }
    }

    pub fn is_ambiguous(&self) -> bool {
        matches!(self, Segmentation::Ambiguous { .. })
    }
}

/// Segments `surface` against `inventory`.
pub fn segment(surface: &str, inventory: &SyllableInventory) -> Result<Segmentation> {
    let chars: Vec<char> = surface.chars().collect();
    if chars.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = chars.len();
    // matches[i] = end positions j (descending) with chars[i..j] in the inventory.
    let matches: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let upper = (i + inventory.max_len).min(n);
            (i + 1..=upper)
                .rev()
                .filter(|&j| inventory.contains(&chars[i..j].iter().collect::<String>()))
                .collect()
        })
        .collect();

    // Number of complete parses from each position, saturating.
    let mut parses = vec![0u64; n + 1];
    parses[n] = 1;
    for i in (0..n).rev() {
        parses[i] = matches[i].iter().fold(0u64, |acc, &j| acc.saturating_add(parses[j]));
    }
    if parses[0] == 0 {
        return Ok(Segmentation::NoParse);
    }

    let mut cuts = vec![0usize];
    if !dfs(0, n, &matches, &mut cuts) {
        unreachable!("a parse exists");
    }
    let syllables: Vec<String> =
        cuts.windows(2).map(|w| chars[w[0]..w[1]].iter().collect()).collect();
    let word = SyllabifiedWord::from_syllables(&syllables)?;
    Ok(if parses[0] == 1 {
        Segmentation::Unique(word)
    } else {
        Segmentation::Ambiguous { word, parses: parses[0] }
    })
}

fn dfs(pos: usize, n: usize, matches: &[Vec<usize>], cuts: &mut Vec<usize>) -> bool {
    if pos == n {
        return true;
    }
    for &end in &matches[pos] {
        cuts.push(end);
        if dfs(end, n, matches, cuts) {
            return true;
        }
        cuts.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthesisConfig};
    use std::collections::HashSet;

    fn inv(items: &[&str]) -> SyllableInventory {
        SyllableInventory::new(items.iter().copied()).unwrap()
    }

    /// All segmentations by enumerating every subset of cut points.
    fn brute_force(surface: &str, inventory: &SyllableInventory) -> Vec<Vec<String>> {
        let chars: Vec<char> = surface.chars().collect();
        let n = chars.len();
        let mut out = Vec::new();
        for mask in 0u32..(1 << (n - 1)) {
            let mut parts = Vec::new();
            let mut start = 0;
            for i in 1..=n {
                if i == n || mask & (1 << (i - 1)) != 0 {
                    parts.push(chars[start..i].iter().collect::<String>());
                    start = i;
                }
            }
            if parts.iter().all(|p| inventory.contains(p)) {
                out.push(parts);
            }
        }
        out
    }

    #[test]
    fn backtracks_off_longer_prefix() {
        let inventory = inv(&["te", "nyi", "die", "ten"]);
        let seg = segment("tenyidie", &inventory).unwrap();
        assert_eq!(seg, Segmentation::Unique(SyllabifiedWord::parse_line("te nyi die").unwrap()));
        assert_eq!(brute_force("tenyidie", &inventory), vec![vec!["te", "nyi", "die"]]);
    }

    #[test]
    fn trivial_cases() {
        let seg = segment("ba", &inv(&["ba"])).unwrap();
        assert_eq!(seg.word().unwrap().syllables(), ["ba"]);
        assert_eq!(segment("xyz", &inv(&["ke", "lie"])).unwrap(), Segmentation::NoParse);
        assert!(segment("", &inv(&["ke"])).is_err());
        assert!(SyllableInventory::new(Vec::<String>::new()).is_err());
        assert!(SyllableInventory::new(["ke-"]).is_err());
    }

    #[test]
    fn ambiguity_is_reported() {
        let inventory = inv(&["a", "ab", "b"]);
        match segment("ab", &inventory).unwrap() {
            Segmentation::Ambiguous { word, parses } => {
                assert_eq!(word.syllables(), ["ab"]);
                assert_eq!(parses, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn build_from_training_words() {
        let words = vec![SyllabifiedWord::parse_line("te nyi die").unwrap()];
        let inventory = build_inventory(&words).unwrap();
        let got: HashSet<&str> = inventory.iter().collect();
        assert_eq!(got, HashSet::from(["te", "nyi", "die"]));
        assert!(build_inventory(&[]).is_err());
    }

    #[test]
    fn agrees_with_brute_force_on_synthetic_words() {
        let cfg = SynthesisConfig::published(400, 21);
        let words = synthesize_corpus(&cfg).unwrap();
        let inventory = build_inventory(&words).unwrap();
        let table: HashSet<&str> = cfg
            .syllable_table
            .iter()
            .chain(&cfg.marker_table)
            .map(|(s, _)| s.as_str())
            .collect();
        assert!(inventory.iter().all(|s| table.contains(s)));

        let mut checked = 0;
        for w in words.iter().filter(|w| w.len_chars() <= 12) {
            let all = brute_force(w.surface(), &inventory);
            let seg = segment(w.surface(), &inventory).unwrap();
            let got = seg.word().unwrap();
            assert!(got.syllables().iter().all(|s| inventory.contains(s)));
            assert_eq!(got.surface(), w.surface());
            if all.len() == 1 {
                assert_eq!(got, w);
                assert!(!seg.is_ambiguous());
            } else {
                assert!(seg.is_ambiguous());
                assert!(all.contains(&got.syllables().to_vec()));
            }
            checked += 1;
        }
        assert!(checked > 100);
    }
}
