use std::io::{BufRead, Write};

use super::{Dataset, Role, TagScheme, TaggedSentence};
use crate::{Error, Result};

pub const DOCSTART: &str = "-DOCSTART-";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagColumn {
    Last,
    Index(usize),
}

/// Which whitespace-delimited columns hold the token and the tag. `tag` is
/// `None` for unlabeled input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConllColumns {
    pub token: usize,
    pub tag: Option<TagColumn>,
}

impl Default for ConllColumns {
    fn default() -> Self {
        ConllColumns {
            token: 0,
            tag: Some(TagColumn::Last),
        }
    }
}

impl ConllColumns {
    pub fn unlabeled() -> Self {
        ConllColumns { token: 0, tag: None }
    }
}

/// Reads blank-line separated sentences. `-DOCSTART-` rows act as sentence
/// boundaries and never produce a sentence.
pub fn read_conll<R: BufRead>(
    reader: R,
    columns: ConllColumns,
    language: &str,
    role: Role,
    scheme: Option<TagScheme>,
) -> Result<Dataset> {
    let mut ds = Dataset::new(language, role, if columns.tag.is_some() { scheme } else { None });
    let mut tokens = Vec::new();
    let mut tags = Vec::new();

    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, ds: &mut Dataset| {
        if tokens.is_empty() {
            return;
        }
        let t = std::mem::take(tokens);
        let g = std::mem::take(tags);
        let labels = columns.tag.map(|_| g);
        ds.sentences.push(TaggedSentence { tokens: t, tags: labels });
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut tokens, &mut tags, &mut ds);
            continue;
        }
        if cols[0] == DOCSTART {
            flush(&mut tokens, &mut tags, &mut ds);
            continue;
        }
        let token = cols
            .get(columns.token)
            .ok_or_else(|| Error::parse(lineno, format!("missing token column {}", columns.token)))?;
        if let Some(tc) = columns.tag {
            let tag = match tc {
                TagColumn::Last if cols.len() >= 2 && cols.len() - 1 != columns.token => cols[cols.len() - 1],
                TagColumn::Last => return Err(Error::parse(lineno, "missing tag column")),
                TagColumn::Index(i) => *cols
                    .get(i)
                    .ok_or_else(|| Error::parse(lineno, format!("missing tag column {i}")))?,
            };
            tags.push(tag.to_string());
        }
        tokens.push(token.to_string());
    }
    flush(&mut tokens, &mut tags, &mut ds);
    Ok(ds)
}

/// Writes `token[ tag]` rows with a blank line after every sentence.
pub fn write_conll<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    for s in &ds.sentences {
        for (i, tok) in s.tokens.iter().enumerate() {
            match &s.tags {
                Some(tags) => writeln!(w, "{} {}", tok, tags[i])?,
                None => writeln!(w, "{tok}")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
