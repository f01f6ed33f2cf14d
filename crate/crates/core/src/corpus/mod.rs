//! CoNLL ingestion, tag schemes, vocabularies and entity-level scoring.

mod conll;
mod metrics;
mod scheme;
mod vocab;

pub use conll::{read_conll, write_conll, ConllColumns, TagColumn, DOCSTART};
pub use metrics::{correct_tag_ratio_by_length, entity_f1, EntityScores, Prf};
pub use scheme::{convert_scheme, extract_entities, EntitySpan, Extraction, Label, TagScheme};
pub use vocab::{build_vocab, CharIndex, Vocab, WordIndex, PAD_CHAR, UNK_CHAR, UNK_WORD};

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// A tokenized sentence, optionally labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<String>>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, tags: Option<Vec<String>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::usage("empty sentence"));
        }
        if let Some(t) = &tags {
            if t.len() != tokens.len() {
                return Err(Error::usage(format!(
                    "{} tokens but {} tags",
                    tokens.len(),
                    t.len()
                )));
            }
        }
        Ok(TaggedSentence { tokens, tags })
    }

    pub fn unlabeled(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens, None)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Dev => "dev",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "dev" => Ok(Role::Dev),
            "test" => Ok(Role::Test),
            _ => Err(Error::usage(format!("unknown dataset role `{s}`"))),
        }
    }
}

/// Sentences of one split in one language. The scheme is `None` for
/// unlabeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<TaggedSentence>,
    pub role: Role,
    pub language: String,
    pub scheme: Option<TagScheme>,
}

impl Dataset {
    pub fn new(language: impl Into<String>, role: Role, scheme: Option<TagScheme>) -> Self {
        Dataset {
            sentences: Vec::new(),
            role,
            language: language.into(),
            scheme,
        }
    }

    pub fn size(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(|s| s.tags.is_some())
    }

    /// Converts every tag sequence to `to`, in place.
    pub fn convert(&mut self, to: TagScheme) -> Result<()> {
        let from = self
            .scheme
            .ok_or_else(|| Error::usage("dataset has no tag scheme"))?;
        for s in &mut self.sentences {
            if let Some(tags) = &s.tags {
                s.tags = Some(convert_scheme(tags, from, to)?);
            }
        }
        self.scheme = Some(to);
        Ok(())
    }

    /// Copy without sentences longer than `max_len`.
    pub fn filter_max_len(&self, max_len: usize) -> Dataset {
        Dataset {
            sentences: self
                .sentences
                .iter()
                .filter(|s| s.len() <= max_len)
                .cloned()
                .collect(),
            ..self.clone_empty()
        }
    }

    pub fn clone_empty(&self) -> Dataset {
        Dataset::new(self.language.clone(), self.role, self.scheme)
    }

    pub fn length_range(&self) -> Option<(usize, usize)> {
        let min = self.sentences.iter().map(|s| s.len()).min()?;
        let max = self.sentences.iter().map(|s| s.len()).max()?;
        Some((min, max))
    }
}
