//! Character vocabulary shared by all neural models.

use std::collections::HashMap;

use crate::alphabet::{normalize, HYPHEN, LETTERS};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const HYPHEN_ID: usize = 1;
/// Placeholder symbol for the padding row in serialized tables.
pub const PAD_SYMBOL: char = '\0';

/// Letter to id map: 0 is padding, 1 is the hyphen, 2.. are the letters in
/// collation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    /// The 27-entry vocabulary over the full alphabet.
    pub fn standard() -> Self {
        let mut symbols = vec![PAD_SYMBOL, HYPHEN];
        symbols.extend(LETTERS);
        Self::from_symbols(symbols).expect("standard table is bijective")
    }

    /// Rebuilds a vocabulary from its id-ordered symbol table.
    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.first() != Some(&PAD_SYMBOL) {
            return Err(Error::Checkpoint("vocabulary must start with the padding entry".into()));
        }
        let mut index = HashMap::new();
        for (id, &ch) in symbols.iter().enumerate().skip(1) {
            if ch == PAD_SYMBOL || index.insert(ch, id).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary symbol {ch:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id(&self, ch: char) -> Result<usize> {
        self.index.get(&ch).copied().ok_or(Error::UnknownSymbol(ch))
    }

    pub fn symbol(&self, id: usize) -> Result<char> {
        match self.symbols.get(id) {
            Some(&ch) if id != PAD_ID => Ok(ch),
            _ => Err(Error::IdOutOfRange { id, size: self.size() }),
        }
    }

    /// Ids for every character of `surface` after normalization. Hyphens
    /// are dropped unless `keep_hyphens` is set.
    pub fn encode(&self, surface: &str, keep_hyphens: bool) -> Result<Vec<usize>> {
        normalize(surface)
            .chars()
            .filter(|&c| keep_hyphens || c != HYPHEN)
            .map(|c| self.id(c))
            .collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::standard()
    }
}
