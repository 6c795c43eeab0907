//! Consonant/vowel templates, syllable-type histograms and onset checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alphabet::{self, HYPHEN};
use crate::corpus::SyllabifiedWord;
use crate::par;

/// Per-syllable C/V templates of one word, e.g. `CCV V CV V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CvPattern {
    templates: Vec<String>,
}

impl CvPattern {
    pub fn templates(&self) -> &[String] {
        &self.templates
    }
}

impl fmt::Display for CvPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.templates.join(" "))
    }
}

/// C/V template of a single syllable; hyphens contribute nothing.
pub fn syllable_template(syllable: &str) -> String {
    syllable.chars().filter_map(alphabet::classify).map(|c| c.symbol()).collect()
}

pub fn cv_pattern(word: &SyllabifiedWord) -> CvPattern {
    CvPattern { templates: word.syllables().iter().map(|s| syllable_template(s)).collect() }
}

/// Template → occurrence count.
pub type Histogram = BTreeMap<String, usize>;

fn merge(mut a: Histogram, b: Histogram) -> Histogram {
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// Counts template occurrences over every syllable of every word.
pub fn syllable_type_histogram(corpus: &[SyllabifiedWord]) -> Histogram {
    par::map(corpus, |w| {
        let mut h = Histogram::new();
        for s in w.syllables() {
            *h.entry(syllable_template(s)).or_default() += 1;
        }
        h
    })
    .into_iter()
    .fold(Histogram::new(), merge)
}

/// Sorts a histogram by descending count, ties by template.
pub fn ranked(hist: &Histogram) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = hist.iter().map(|(k, &c)| (k.clone(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalStats {
    pub beginning: Histogram,
    pub middle: Histogram,
    pub end: Histogram,
}

impl PositionalStats {
    pub fn total(&self) -> usize {
        [&self.beginning, &self.middle, &self.end].iter().flat_map(|h| h.values()).sum()
    }
}

/// First syllable → beginning, last (of two or more) → end, the rest →
/// middle. A monosyllable counts once, as beginning.
pub fn positional_histogram(corpus: &[SyllabifiedWord]) -> PositionalStats {
    par::map(corpus, |w| {
        let mut p = PositionalStats::default();
        let n = w.syllable_count();
        for (i, s) in w.syllables().iter().enumerate() {
            let bucket = if i == 0 {
                &mut p.beginning
            } else if i + 1 == n {
                &mut p.end
            } else {
                &mut p.middle
            };
            *bucket.entry(syllable_template(s)).or_default() += 1;
        }
        p
    })
    .into_iter()
    .fold(PositionalStats::default(), |a, b| PositionalStats {
        beginning: merge(a.beginning, b.beginning),
        middle: merge(a.middle, b.middle),
        end: merge(a.end, b.end),
    })
}

/// Most frequent syllables, descending frequency, ties lexicographic.
/// A leading hyphen is part of the identity (`-u` ≠ `u`).
pub fn top_syllables(corpus: &[SyllabifiedWord], n: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in corpus {
        for s in w.syllables() {
            *counts.entry(s.as_str()).or_default() += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().map(|(s, c)| (s.to_string(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(n);
    v
}

/// Plosive(+aspiration) + trill onsets.
pub const PLOSIVE_TRILL_CLUSTERS: [&str; 4] = ["pr", "phr", "kr", "khr"];

/// Multi-letter spellings of single consonants found at syllable onsets.
pub const DIGRAPH_ONSETS: [&str; 20] = [
    "ch", "sh", "zh", "th", "ph", "kh", "gh", "ts", "tsh", "dz", "pf", "pfh", "mh", "nh", "lh",
    "rh", "vh", "yh", "ny", "ng",
];

/// Consonant letters preceding the first vowel (a leading hyphen is skipped).
pub fn onset(syllable: &str) -> String {
    syllable
        .chars()
        .filter(|&c| c != HYPHEN)
        .take_while(|&c| !alphabet::is_vowel(c))
        .collect()
}

pub fn is_plosive_trill_cluster(onset: &str) -> bool {
    PLOSIVE_TRILL_CLUSTERS.contains(&onset)
}

/// True when the onset is empty, a single consonant, a plosive+trill
/// cluster, or a known digraph spelling.
pub fn validate_onset_cluster(syllable: &str) -> bool {
    let on = onset(syllable);
    on.chars().count() <= 1 || is_plosive_trill_cluster(&on) || DIGRAPH_ONSETS.contains(&on.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<SyllabifiedWord> {
        lines.iter().map(|l| SyllabifiedWord::parse_line(l).unwrap()).collect()
    }

    #[test]
    fn patterns() {
        let w = |l: &str| cv_pattern(&SyllabifiedWord::parse_line(l).unwrap()).to_string();
        assert_eq!(w("chü ü mo -u"), "CCV V CV V");
        assert_eq!(w("a"), "V");
        assert_eq!(w("tsei ü"), "CCVV V");
        assert_eq!(w("the pfhe theü"), "CCV CCCV CCVV");
        assert_eq!(w("cieü rie lie ke tuo"), "CVVV CVV CVV CV CVV");
    }

    #[test]
    fn histograms() {
        let h = syllable_type_histogram(&corpus(&["ke nyü", "ba"]));
        assert_eq!(h, Histogram::from([("CV".into(), 2), ("CCV".into(), 1)]));

        let p = positional_histogram(&corpus(&["te nyi die"]));
        assert_eq!(p.beginning, Histogram::from([("CV".into(), 1)]));
        assert_eq!(p.middle, Histogram::from([("CCV".into(), 1)]));
        assert_eq!(p.end, Histogram::from([("CVV".into(), 1)]));

        let p = positional_histogram(&corpus(&["ba"]));
        assert_eq!(p.beginning, Histogram::from([("CV".into(), 1)]));
        assert!(p.middle.is_empty() && p.end.is_empty());
    }

    #[test]
    fn top_syllables_counts_markers_separately() {
        let c = corpus(&["ke ke"]);
        assert_eq!(top_syllables(&c, 5), vec![("ke".to_string(), 2)]);
        let c = corpus(&["ke u", "ke -u", "u"]);
        let top = top_syllables(&c, 3);
        assert_eq!(top, vec![("ke".into(), 2), ("u".into(), 2), ("-u".into(), 1)]);
    }

    #[test]
    fn onset_clusters() {
        assert!(validate_onset_cluster("kra"));
        assert!(validate_onset_cluster("pra"));
        assert!(validate_onset_cluster("khro"));
        assert!(validate_onset_cluster("phri"));
        assert!(!validate_onset_cluster("rka"));
        assert!(!validate_onset_cluster("tra"));
        assert!(validate_onset_cluster("shü"));
        assert!(validate_onset_cluster("pfhe"));
        assert!(validate_onset_cluster("u"));
        assert!(validate_onset_cluster("-ko"));
        assert!(is_plosive_trill_cluster("kr"));
        assert!(!is_plosive_trill_cluster("sh"));
    }
}
