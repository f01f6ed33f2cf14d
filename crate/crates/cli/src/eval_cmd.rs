use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use xner::corpus::{correct_tag_ratio_by_length, entity_f1, Role, TagScheme};
use xner::{Error, Result};

use crate::common::{create, pct, read_labeled};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Gold CoNLL file, tag in the last column.
    #[arg(long)]
    gold: PathBuf,
    /// Predicted CoNLL file, tag in the last column.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "iob2")]
    gold_scheme: TagScheme,
    /// Scheme of the predictions; defaults to the gold scheme.
    #[arg(long)]
    pred_scheme: Option<TagScheme>,
    /// Write the correct-tag ratio per sentence-length bucket as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    bucket: usize,
}

pub fn run(a: EvalArgs) -> Result<()> {
    let pred_scheme = a.pred_scheme.unwrap_or(a.gold_scheme);
    let gold = read_labeled(&a.gold, "gold", Role::Test, a.gold_scheme)?;
    let pred = read_labeled(&a.pred, "pred", Role::Test, pred_scheme)?;
    if let Some(i) = (0..gold.size().max(pred.size()))
        .find(|&i| gold.sentences.get(i).map(|s| &s.tokens) != pred.sentences.get(i).map(|s| &s.tokens))
    {
        let show = |d: &xner::corpus::Dataset| d.sentences.get(i).map_or("<missing>".to_string(), |s| s.tokens.join(" "));
        return Err(Error::Usage(format!(
            "gold and predictions diverge at sentence {}: gold `{}` vs pred `{}`",
            i + 1,
            show(&gold),
            show(&pred)
        )));
    }
    let tags: Vec<Vec<String>> = pred
        .sentences
        .iter()
        .map(|s| s.tags.clone().expect("read with a tag column"))
        .collect();
    let scores = entity_f1(&gold, &tags, pred_scheme)?;
    println!("type\tprecision\trecall\tf1\tgold\tpredicted\tcorrect");
    let row = |name: &str, p: &xner::corpus::Prf| {
        println!(
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            pct(p.precision),
            pct(p.recall),
            pct(p.f1),
            p.gold,
            p.predicted,
            p.correct
        )
    };
    row("overall", &scores.overall);
    for (t, p) in &scores.per_type {
        row(t, p);
    }
    if let Some(path) = &a.curve {
        let curve = correct_tag_ratio_by_length(&gold, &tags, pred_scheme, a.bucket)?;
        let mut w = create(path)?;
        writeln!(w, "length_bucket,correct_ratio")?;
        for (b, r) in curve {
            if let Some(r) = r {
                writeln!(w, "{b},{r:.6}")?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
