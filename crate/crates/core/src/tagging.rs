//! S/C tagging: `S` opens a syllable, `C` continues it.
//!
//! Only letters are tagged. A hyphen carries no tag and is glued to the
//! syllable of the letter that follows it, so `chüümo-u` has eight
//! characters but seven tags.

use std::fmt;
use std::str::FromStr;

use crate::alphabet::HYPHEN;
use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    S,
    C,
}

impl Tag {
    pub fn as_char(self) -> char {
        match self {
            Tag::S => 'S',
            Tag::C => 'C',
        }
    }

    pub fn from_char(ch: char) -> Result<Self> {
        match ch {
            'S' => Ok(Tag::S),
            'C' => Ok(Tag::C),
            other => Err(Error::InvalidTag(other)),
        }
    }

    /// Class index shared by all neural models (`S` = 0, `C` = 1).
    pub fn index(self) -> usize {
        match self {
            Tag::S => 0,
            Tag::C => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Tag::S),
            1 => Some(Tag::C),
            _ => None,
        }
    }
}

/// Renders raw tags as a contiguous `SCC…` string.
pub fn tags_to_string(tags: &[Tag]) -> String {
    tags.iter().map(|t| t.as_char()).collect()
}

/// A well-formed tag sequence: non-empty and starting with `S`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence {
    tags: Vec<Tag>,
}

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        match tags.first() {
            None => Err(Error::EmptyInput),
            Some(Tag::C) => Err(Error::FirstTagNotStart),
            Some(Tag::S) => Ok(Self { tags }),
        }
    }

    /// Forces an arbitrary emission into a valid sequence of `len` tags:
    /// truncates or pads with `C`, and sets the first tag to `S`.
    pub fn coerce(raw: &[Tag], len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        let mut tags: Vec<Tag> = raw.iter().copied().take(len).collect();
        tags.resize(len, Tag::C);
        tags[0] = Tag::S;
        Ok(Self { tags })
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn aligned_length(&self) -> usize {
        self.tags.len()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn start_count(&self) -> usize {
        self.tags.iter().filter(|&&t| t == Tag::S).count()
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&tags_to_string(&self.tags))
    }
}

impl FromStr for TagSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tags = s.chars().map(Tag::from_char).collect::<Result<Vec<_>>>()?;
        TagSequence::new(tags)
    }
}

/// Tags every non-hyphen letter: `S` for the first letter of a syllable,
/// `C` otherwise.
pub fn encode_tags(word: &SyllabifiedWord) -> Result<TagSequence> {
    let mut tags = Vec::with_capacity(word.letter_count());
    for syl in word.syllables() {
        let mut first = true;
        for _ in syl.chars().filter(|&c| c != HYPHEN) {
            tags.push(if first { Tag::S } else { Tag::C });
            first = false;
        }
        if first {
            return Err(Error::HyphenOnlySyllable(syl.clone()));
        }
    }
    TagSequence::new(tags)
}

/// Inverse of [`encode_tags`]: opens a syllable at each `S`, gluing any
/// pending hyphens onto the syllable of the next letter.
pub fn decode_tags(surface: &str, tags: &TagSequence) -> Result<SyllabifiedWord> {
    decode_raw(surface, tags.tags())
}

pub(crate) fn decode_raw(surface: &str, tags: &[Tag]) -> Result<SyllabifiedWord> {
    let letters = surface.chars().filter(|&c| c != HYPHEN).count();
    if tags.len() != letters {
        return Err(Error::TagLengthMismatch { tags: tags.len(), letters });
    }
    match tags.first() {
        None => return Err(Error::EmptyInput),
        Some(Tag::C) => return Err(Error::FirstTagNotStart),
        Some(Tag::S) => {}
    }
    let mut syllables: Vec<String> = Vec::new();
    let mut pending = String::new();
    let mut tag_iter = tags.iter();
    for ch in surface.chars() {
        if ch == HYPHEN {
            pending.push(ch);
            continue;
        }
        match tag_iter.next() {
            Some(Tag::S) => {
                let mut syl = std::mem::take(&mut pending);
                syl.push(ch);
                syllables.push(syl);
            }
            _ => {
                let last = syllables.last_mut().expect("first tag is S");
                last.push_str(&pending);
                pending.clear();
                last.push(ch);
            }
        }
    }
    if !pending.is_empty() {
        match syllables.last_mut() {
            Some(last) => last.push_str(&pending),
            None => return Err(Error::InvalidWord(surface.to_string())),
        }
    }
    SyllabifiedWord::from_syllables(&syllables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthesisConfig};
    use proptest::prelude::*;

    fn word(line: &str) -> SyllabifiedWord {
        SyllabifiedWord::parse_line(line).unwrap()
    }

    fn enc(line: &str) -> String {
        encode_tags(&word(line)).unwrap().to_string()
    }

    #[test]
    fn published_encodings() {
        assert_eq!(enc("te nyi die"), "SCSCCSCC");
        assert_eq!(enc("chü ü mo -u"), "SCCSSCS");
        assert_eq!(enc("tsei ü"), "SCCCS");
        assert_eq!(enc("she so u"), "SCCSCS");
        assert_eq!(enc("ba"), "SC");
        let t = encode_tags(&word("chü ü mo -u")).unwrap();
        assert_eq!(t.aligned_length(), 7);
    }

    #[test]
    fn published_decodings() {
        let d = |s: &str, t: &str| decode_tags(s, &t.parse().unwrap()).unwrap();
        assert_eq!(d("tenyidie", "SCSCCSCC").syllables(), ["te", "nyi", "die"]);
        assert_eq!(d("chüümo-u", "SCCSSCS").syllables(), ["chü", "ü", "mo", "-u"]);
        assert_eq!(d("a", "S").syllables(), ["a"]);
    }

    #[test]
    fn decode_errors() {
        let t: TagSequence = "SC".parse().unwrap();
        assert!(matches!(decode_tags("abc", &t), Err(Error::TagLengthMismatch { .. })));
        assert!(matches!("CS".parse::<TagSequence>(), Err(Error::FirstTagNotStart)));
        assert!(matches!("SX".parse::<TagSequence>(), Err(Error::InvalidTag('X'))));
        assert!(matches!(decode_raw("ab", &[Tag::C, Tag::S]), Err(Error::FirstTagNotStart)));
    }

    #[test]
    fn hyphen_before_continuation_stays_inside_syllable() {
        let w = decode_raw("ser-ko", &[Tag::S, Tag::C, Tag::C, Tag::C, Tag::C]).unwrap();
        assert_eq!(w.syllables(), ["ser-ko"]);
    }

    #[test]
    fn coerce_repairs_raw_output() {
        let t = TagSequence::coerce(&[Tag::C, Tag::C], 4).unwrap();
        assert_eq!(t.to_string(), "SCCC");
        let t = TagSequence::coerce(&[Tag::S, Tag::S, Tag::S], 2).unwrap();
        assert_eq!(t.to_string(), "SS");
    }

    #[test]
    fn round_trip_over_synthetic_corpus() {
        let words = synthesize_corpus(&SynthesisConfig::published(2_000, 9)).unwrap();
        for w in &words {
            let tags = encode_tags(w).unwrap();
            assert_eq!(tags.start_count(), w.syllable_count());
            assert_eq!(tags.len(), w.letter_count());
            assert_eq!(&decode_tags(w.surface(), &tags).unwrap(), w);
        }
    }

    proptest! {
        #[test]
        fn decode_encode_identity(
            syls in proptest::collection::vec(
                (any::<bool>(), "[a-pr-wyzü]{1,4}")
                    .prop_map(|(m, s)| if m { format!("-{s}") } else { s }),
                1..7)
        ) {
            let w = SyllabifiedWord::from_syllables(&syls).unwrap();
            let tags = encode_tags(&w).unwrap();
            prop_assert_eq!(tags.tags()[0], Tag::S);
            prop_assert_eq!(decode_tags(w.surface(), &tags).unwrap(), w);
        }
    }
}
