//! IOB1 / IOB2 / IOBES chunk encodings.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagScheme {
    Iob1,
    Iob2,
    Iobes,
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagScheme::Iob1 => "iob1",
            TagScheme::Iob2 => "iob2",
            TagScheme::Iobes => "iobes",
        })
    }
}

impl FromStr for TagScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" | "iob" => Ok(TagScheme::Iob1),
            "iob2" | "bio" => Ok(TagScheme::Iob2),
            "iobes" | "bioes" | "bilou" => Ok(TagScheme::Iobes),
            _ => Err(Error::usage(format!("unknown tag scheme `{s}`"))),
        }
    }
}

/// A parsed tag: `O` or a prefix letter with an entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Outside,
    Begin(String),
    Inside(String),
    End(String),
    Single(String),
}

impl Label {
    pub fn parse(tag: &str) -> Result<Label> {
        if tag == "O" {
            return Ok(Label::Outside);
        }
        let (prefix, kind) = tag
            .split_once('-')
            .ok_or_else(|| Error::InvalidTag(tag.to_string()))?;
        if kind.is_empty() {
            return Err(Error::InvalidTag(tag.to_string()));
        }
        let kind = kind.to_string();
        match prefix {
            "B" => Ok(Label::Begin(kind)),
            "I" => Ok(Label::Inside(kind)),
            "E" | "L" => Ok(Label::End(kind)),
            "S" | "U" => Ok(Label::Single(kind)),
            _ => Err(Error::InvalidTag(tag.to_string())),
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            Label::Outside => None,
            Label::Begin(k) | Label::Inside(k) | Label::End(k) | Label::Single(k) => Some(k),
        }
    }

    pub(crate) fn prefix(&self) -> char {
        match self {
            Label::Outside => 'O',
            Label::Begin(_) => 'B',
            Label::Inside(_) => 'I',
            Label::End(_) => 'E',
            Label::Single(_) => 'S',
        }
    }
}

/// Typed entity span; `end` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, kind: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            kind: kind.into(),
        }
    }
}

/// Spans found in one tag sequence plus the number of ill-formed
/// continuations that had to be repaired.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub spans: Vec<EntitySpan>,
    pub repairs: usize,
}

// conlleval chunk boundary rules
fn ends_chunk(prev: char, cur: char, prev_kind: Option<&str>, kind: Option<&str>) -> bool {
    match (prev, cur) {
        ('E', _) | ('S', _) => true,
        ('B', 'B') | ('B', 'S') | ('B', 'O') => true,
        ('I', 'B') | ('I', 'S') | ('I', 'O') => true,
        _ => prev != 'O' && prev_kind != kind,
    }
}

fn starts_chunk(prev: char, cur: char, prev_kind: Option<&str>, kind: Option<&str>) -> bool {
    match (prev, cur) {
        (_, 'B') | (_, 'S') => true,
        ('E', 'E') | ('E', 'I') | ('S', 'E') | ('S', 'I') | ('O', 'E') | ('O', 'I') => true,
        _ => cur != 'O' && prev_kind != kind,
    }
}

/// Maximal typed spans of `tags` read under `scheme`.
///
/// Ill-formed sequences are read leniently: an `I-`/`E-` tag that cannot
/// continue the open span starts a new one, and under IOBES a span that is
/// not closed by `E-`/`S-` is closed at its last token. Each such event is
/// counted in [`Extraction::repairs`]; under IOB1 an `I-` start is legal.
pub fn extract_entities(tags: &[impl AsRef<str>], scheme: TagScheme) -> Result<Extraction> {
    let labels: Vec<Label> = tags
        .iter()
        .map(|t| Label::parse(t.as_ref()))
        .collect::<Result<_>>()?;
    let mut out = Extraction::default();
    let mut open: Option<(usize, String)> = None;
    let mut prev = 'O';
    let mut prev_kind: Option<&str> = None;
    for (i, label) in labels.iter().enumerate() {
        let cur = label.prefix();
        let kind = label.kind();
        if let Some((start, k)) = open.take() {
            if ends_chunk(prev, cur, prev_kind, kind) {
                if scheme == TagScheme::Iobes && !matches!(prev, 'E' | 'S') {
                    out.repairs += 1;
                }
                out.spans.push(EntitySpan::new(start, i - 1, k));
            } else {
                open = Some((start, k));
            }
        }
        if starts_chunk(prev, cur, prev_kind, kind) {
            if let Some((start, k)) = open.take() {
                // a start that was not preceded by an end: close defensively
                out.spans.push(EntitySpan::new(start, i - 1, k));
            }
            if scheme != TagScheme::Iob1 && matches!(cur, 'I' | 'E') {
                out.repairs += 1;
            }
            open = Some((i, kind.unwrap_or_default().to_string()));
        }
        prev = cur;
        prev_kind = kind;
    }
    if let Some((start, k)) = open {
        if scheme == TagScheme::Iobes && !matches!(prev, 'E' | 'S') {
            out.repairs += 1;
        }
        out.spans.push(EntitySpan::new(start, labels.len() - 1, k));
    }
    Ok(out)
}

/// Encodes spans over a sentence of length `len`.
pub(crate) fn encode_spans(spans: &[EntitySpan], len: usize, scheme: TagScheme) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    let mut prev_end: Option<(usize, &str)> = None;
    for span in spans {
        let k = &span.kind;
        for i in span.start..=span.end {
            let prefix = match scheme {
                TagScheme::Iob2 => if i == span.start { "B" } else { "I" },
                TagScheme::Iobes => {
                    if span.start == span.end {
                        "S"
                    } else if i == span.start {
                        "B"
                    } else if i == span.end {
                        "E"
                    } else {
                        "I"
                    }
                }
                TagScheme::Iob1 => {
                    let adjacent_same = matches!(prev_end, Some((e, pk)) if e + 1 == span.start && pk == k);
                    if i == span.start && adjacent_same { "B" } else { "I" }
                }
            };
            tags[i] = format!("{prefix}-{k}");
        }
        prev_end = Some((span.end, k));
    }
    tags
}

/// Re-encodes a tag sequence; entity spans and types are preserved.
pub fn convert_scheme(tags: &[impl AsRef<str>], from: TagScheme, to: TagScheme) -> Result<Vec<String>> {
    let ex = extract_entities(tags, from)?;
    Ok(encode_spans(&ex.spans, tags.len(), to))
}
