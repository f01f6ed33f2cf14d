use std::io::{Read, Write};
use std::path::PathBuf;

use clap::Args;
use xner::checkpoint::{tagger_from_checkpoint, Checkpoint};
use xner::corpus::{convert_scheme, read_conll, ConllColumns, Role, TagScheme, DOCSTART};
use xner::embeddings::DEFAULT_LOAD_LIMIT;
use xner::tagger::Side;
use xner::{Error, Result};

use crate::common::{load_mapper, load_table, open, output, to_common, Lang};

#[derive(Args, Debug)]
pub struct TagArgs {
    /// Model checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// CoNLL input; the first column holds the tokens.
    #[arg(long)]
    input: PathBuf,
    /// `.vec` file of the input language.
    #[arg(long)]
    emb: PathBuf,
    /// Language of the input, which picks the encoder and the mapping.
    #[arg(long, value_enum, default_value = "target")]
    lang: Lang,
    #[arg(long)]
    mapper: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LOAD_LIMIT)]
    max_vocab: usize,
    /// Write IOB2 tags instead of the model's scheme.
    #[arg(long)]
    iob2: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn run(a: TagArgs) -> Result<()> {
    let tagger = tagger_from_checkpoint(&Checkpoint::load(&a.model)?)?;
    let mapper = a.mapper.as_ref().map(|p| load_mapper(p)).transpose()?;
    let table = to_common(&load_table(&a.emb, "input", Some(a.max_vocab))?, a.lang, mapper.as_ref())?;
    if table.dim() != tagger.config.emb_dim {
        return Err(Error::Usage(format!(
            "embedding dimension {} does not match the model's {}",
            table.dim(),
            tagger.config.emb_dim
        )));
    }
    let side = match a.lang {
        Lang::Target if tagger.has_target_encoder() => Side::Target,
        _ => Side::Source,
    };
    let mut text = String::new();
    open(&a.input)?.read_to_string(&mut text)?;
    let data = read_conll(text.as_bytes(), ConllColumns::unlabeled(), "input", Role::Test, None)?;

    let mut tags = Vec::new();
    for s in &data.sentences {
        let pred = tagger.predict(side, &table, &s.tokens)?;
        let pred = if a.iob2 { convert_scheme(&pred, tagger.scheme, TagScheme::Iob2)? } else { pred };
        tags.extend(pred);
    }

    let mut w = output(a.output.as_deref())?;
    let mut next = tags.into_iter();
    for line in text.lines() {
        let first = line.split_whitespace().next();
        match first {
            None => writeln!(w)?,
            Some(DOCSTART) => writeln!(w, "{line}")?,
            Some(_) => {
                let tag = next.next().expect("one tag per token line");
                writeln!(w, "{} {tag}", line.trim_end())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
