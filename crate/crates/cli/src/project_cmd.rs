use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use xner::checkpoint::Checkpoint;
use xner::corpus::{Label, Role, TagScheme};
use xner::numeric::{pca, Matrix};
use xner::{Error, Result};

use crate::common::{load_mapper, load_table, output, read_labeled, to_common, write_lines, Lang};

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// `.vec` file to project.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    emb: Option<PathBuf>,
    /// Model checkpoint whose character embeddings are projected.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Language of `--emb`, deciding whether `--mapper` applies.
    #[arg(long, value_enum, default_value = "source")]
    lang: Lang,
    #[arg(long)]
    mapper: Option<PathBuf>,
    /// Number of leading vectors projected.
    #[arg(long, default_value_t = 1000)]
    limit: usize,
    /// CoNLL file whose tags fill the `tag` column.
    #[arg(long)]
    tags: Option<PathBuf>,
    #[arg(long, default_value = "iob2")]
    tag_scheme: TagScheme,
    /// CSV output; stdout when absent. A `.manifest` file is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entity type of each word's first tagged occurrence, `O` otherwise.
fn word_types(path: &Path, scheme: TagScheme) -> Result<HashMap<String, String>> {
    let data = read_labeled(path, "tags", Role::Test, scheme)?;
    let mut out = HashMap::new();
    for s in &data.sentences {
        for (tok, tag) in s.tokens.iter().zip(s.tags.iter().flatten()) {
            let kind = Label::parse(tag)?.kind().unwrap_or("O").to_string();
            out.entry(tok.to_lowercase()).or_insert(kind);
        }
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn run(a: ProjectArgs) -> Result<()> {
    let (words, vectors): (Vec<String>, Matrix) = match (&a.emb, &a.model) {
        (Some(p), _) => {
            let mapper = a.mapper.as_ref().map(|p| load_mapper(p)).transpose()?;
            let t = to_common(&load_table(p, "input", Some(a.limit))?, a.lang, mapper.as_ref())?;
            (t.words().to_vec(), t.vectors().clone())
        }
        (None, Some(p)) => {
            let ck = Checkpoint::load(p)?;
            let chars = ck
                .tensor("chars")
                .ok_or_else(|| Error::Artifact("checkpoint has no character embeddings".into()))?;
            let names: Vec<String> = ["<pad>".to_string(), "<unk>".to_string()]
                .into_iter()
                .chain(ck.get("chars")?.chars().map(String::from))
                .collect();
            let n = chars.rows().min(names.len()).min(a.limit);
            let m = Matrix::from_fn(n, chars.cols(), |r, c| chars[(r, c)]);
            (names[..n].to_vec(), m)
        }
        (None, None) => return Err(Error::Usage("give --emb or --model".into())),
    };
    if vectors.cols() < 2 {
        return Err(Error::Usage("need vectors of dimension at least 2".into()));
    }
    let types = a.tags.as_ref().map(|p| word_types(p, a.tag_scheme)).transpose()?;
    let p = pca(&vectors, 2)?;

    let mut w = output(a.out.as_deref())?;
    writeln!(w, "word,x,y,tag")?;
    for (i, word) in words.iter().enumerate() {
        let tag = types
            .as_ref()
            .and_then(|t| t.get(&word.to_lowercase()))
            .map_or("", String::as_str);
        writeln!(w, "{},{:.6},{:.6},{}", csv_field(word), p.projection[(i, 0)], p.projection[(i, 1)], csv_field(tag))?;
    }
    w.flush()?;

    let total = p.total_variance();
    if let Some(out) = &a.out {
        let mut mp = out.clone().into_os_string();
        mp.push(".manifest");
        write_lines(
            &PathBuf::from(mp),
            [
                "method=pca".to_string(),
                format!("points={}", words.len()),
                format!("dim={}", vectors.cols()),
                format!("explained_variance={:.6}", (p.eigenvalues[0] + p.eigenvalues[1]) / total),
            ],
        )?;
    }
    Ok(())
}
