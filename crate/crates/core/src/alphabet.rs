//! The Tenyidie letter inventory.
//!
//! 25 letters: six vowels and nineteen consonants. `q` and `x` are absent,
//! `ü` is added. The hyphen marks bound morphemes (`-u`, `-ko`, ...) and is
//! neither vowel nor consonant.

use unicode_normalization::UnicodeNormalization;

pub const HYPHEN: char = '-';

pub const VOWELS: [char; 6] = ['a', 'e', 'i', 'o', 'u', 'ü'];

pub const CONSONANTS: [char; 19] = [
    'b', 'c', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'w', 'y', 'z',
];

/// Letters in collation order (`ü` sorts after `u`).
pub const LETTERS: [char; 25] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'r', 's', 't',
    'u', 'ü', 'v', 'w', 'y', 'z',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LetterClass {
    Vowel,
    Consonant,
}

impl LetterClass {
    pub fn symbol(self) -> char {
        match self {
            LetterClass::Vowel => 'V',
            LetterClass::Consonant => 'C',
        }
    }
}

/// Zero-sized handle over the fixed alphabet.
#[derive(Debug, Clone, Copy, Default)]
pub struct Alphabet;

impl Alphabet {
    pub fn vowels(&self) -> &'static [char] {
        &VOWELS
    }

    pub fn consonants(&self) -> &'static [char] {
        &CONSONANTS
    }

    pub fn letters(&self) -> &'static [char] {
        &LETTERS
    }

    /// `None` for the hyphen and for anything outside the alphabet.
    pub fn classify(&self, ch: char) -> Option<LetterClass> {
        classify(ch)
    }

    pub fn is_letter(&self, ch: char) -> bool {
        classify(ch).is_some()
    }
}

pub fn classify(ch: char) -> Option<LetterClass> {
    if VOWELS.contains(&ch) {
        Some(LetterClass::Vowel)
    } else if CONSONANTS.contains(&ch) {
        Some(LetterClass::Consonant)
    } else {
        None
    }
}

pub fn is_vowel(ch: char) -> bool {
    VOWELS.contains(&ch)
}

pub fn is_letter(ch: char) -> bool {
    classify(ch).is_some()
}

/// Lowercases and composes `u` + combining diaeresis into `ü`.
pub fn normalize(text: &str) -> String {
    text.nfc().flat_map(char::to_lowercase).collect::<String>().nfc().collect()
}
