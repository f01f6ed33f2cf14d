use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use xner::align::{Direction, LinearMapper};
use xner::checkpoint::{mapper_from_checkpoint, Checkpoint, ConfigMap};
use xner::corpus::{read_conll, ConllColumns, Dataset, Role, TagScheme};
use xner::embeddings::{load_vec_text, EmbeddingTable};
use xner::trainer::TrainingConfig;
use xner::{Error, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Usage(format!("cannot open {}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Usage(format!("cannot create {}: {e}", path.display())))
}

/// Writer for `path`, or stdout when absent.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn load_table(path: &Path, language: &str, limit: Option<usize>) -> Result<EmbeddingTable> {
    let t = load_vec_text(open(path)?, language, limit)?;
    log::info!("loaded {} vectors of dim {} from {}", t.len(), t.dim(), path.display());
    Ok(t)
}

pub fn read_labeled(path: &Path, language: &str, role: Role, scheme: TagScheme) -> Result<Dataset> {
    read_conll(open(path)?, ConllColumns::default(), language, role, Some(scheme))
}

pub fn read_tokens(path: &Path, language: &str, role: Role) -> Result<Dataset> {
    read_conll(open(path)?, ConllColumns::unlabeled(), language, role, None)
}

pub fn load_mapper(path: &Path) -> Result<LinearMapper> {
    mapper_from_checkpoint(&Checkpoint::load(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lang {
    Source,
    Target,
}

/// `table` moved into the common space: the mapper is applied when it maps
/// this language.
pub fn to_common(table: &EmbeddingTable, lang: Lang, mapper: Option<&LinearMapper>) -> Result<EmbeddingTable> {
    match (mapper, lang) {
        (Some(m), Lang::Target) if m.direction == Direction::TargetToSource => table.apply_mapper(m),
        (Some(m), Lang::Source) if m.direction == Direction::SourceToTarget => table.apply_mapper(m),
        _ => Ok(table.clone()),
    }
}

/// Training configuration layers: defaults, then `--config`, then `--set`.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration entry.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    pub fn apply(&self, cfg: &mut TrainingConfig) -> Result<()> {
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Usage(format!("cannot read {}: {e}", p.display())))?;
            cfg.apply_text(&text)?;
        }
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(())
    }
}

pub const TRAIN_PREFIX: &str = "train.";

/// Training configuration as checkpoint config entries.
pub fn config_entries(cfg: &TrainingConfig) -> ConfigMap {
    cfg.pairs()
        .into_iter()
        .map(|(k, v)| (format!("{TRAIN_PREFIX}{k}"), v))
        .collect()
}

/// Training configuration stored in a checkpoint, over the defaults.
pub fn config_from_checkpoint(ck: &Checkpoint) -> Result<TrainingConfig> {
    let mut cfg = TrainingConfig::default();
    for (k, v) in &ck.config {
        if let Some(key) = k.strip_prefix(TRAIN_PREFIX) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

/// `dir/name.ext` becomes `dir/name.tag.ext`.
pub fn with_tag(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// F1 as a percentage with two decimals.
pub fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}
