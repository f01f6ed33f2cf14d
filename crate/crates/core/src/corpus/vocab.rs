use std::collections::{BTreeMap, HashMap};

use super::Dataset;
use crate::embeddings::EmbeddingTable;
use crate::{Error, Result};

pub const UNK_WORD: &str = "<unk>";
pub const PAD_CHAR: usize = 0;
pub const UNK_CHAR: usize = 1;

/// Word to row index for one language. Index 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordIndex {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordIndex {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![UNK_WORD.to_string()];
        let mut index = HashMap::new();
        index.insert(UNK_WORD.to_string(), 0);
        for w in words {
            if !index.contains_key(&w) {
                index.insert(w.clone(), all.len());
                all.push(w);
            }
        }
        WordIndex { words: all, index }
    }

    pub fn get(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Words including the leading unknown marker.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }
}

/// Character table shared by every language. Index 0 is padding, 1 the
/// unknown character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharIndex {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharIndex {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut sorted: Vec<char> = chars.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let index = sorted.iter().enumerate().map(|(i, &c)| (c, i + 2)).collect();
        CharIndex { chars: sorted, index }
    }

    /// Number of rows in the character table, including padding and unknown.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn get(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_CHAR)
    }

    pub fn encode(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.get(c)).collect()
    }

    /// Known characters in index order (without padding / unknown).
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub words: BTreeMap<String, WordIndex>,
    pub chars: CharIndex,
}

/// Word index per language and one character index across all languages.
///
/// Words are ordered by corpus frequency, ties broken lexicographically.
/// When an embedding table for a language is supplied, only words that the
/// table can resolve (exactly or lowercased) are indexed; the rest fall back
/// to the unknown word.
pub fn build_vocab(datasets: &[&Dataset], embeddings: &[&EmbeddingTable]) -> Result<Vocab> {
    if datasets.is_empty() {
        return Err(Error::usage("build_vocab needs at least one dataset"));
    }
    let mut counts: BTreeMap<&str, HashMap<&str, usize>> = BTreeMap::new();
    let mut chars = Vec::new();
    for ds in datasets {
        let c = counts.entry(ds.language.as_str()).or_default();
        for s in &ds.sentences {
            for t in &s.tokens {
                *c.entry(t.as_str()).or_default() += 1;
                chars.extend(t.chars());
            }
        }
    }
    let mut words = BTreeMap::new();
    for (lang, c) in counts {
        let table = embeddings.iter().find(|e| e.language() == lang);
        let mut entries: Vec<(&str, usize)> = c
            .into_iter()
            .filter(|(w, _)| table.is_none_or(|t| t.resolve(w).is_some()))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        words.insert(
            lang.to_string(),
            WordIndex::from_words(entries.into_iter().map(|(w, _)| w.to_string())),
        );
    }
    Ok(Vocab {
        words,
        chars: CharIndex::from_chars(chars),
    })
}
