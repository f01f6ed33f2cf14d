use std::path::{Path, PathBuf};

use clap::Args;
use xner::checkpoint::{tagger_from_checkpoint, tagger_to_checkpoint, Checkpoint, ConfigMap};
use xner::corpus::{Dataset, Role, TagScheme};
use xner::embeddings::{EmbeddingTable, DEFAULT_LOAD_LIMIT};
use xner::numeric::Rng;
use xner::tagger::Side;
use xner::trainer::{
    augmented_finetune, evaluate, multi_seed_report, new_tagger, pretrain_source, EvalRecord, EvalSet, EvalSets, Selection,
    TrainOutcome, TrainingConfig, Variant, LOG_HEADER,
};
use xner::{Error, Result};

use crate::common::{
    config_entries, config_from_checkpoint, load_mapper, load_table, pct, read_labeled, read_tokens, to_common, with_tag,
    write_lines, ConfigArgs, Lang,
};

/// Inputs shared by both training commands.
#[derive(Args, Debug)]
pub struct DataArgs {
    /// Source `.vec` file.
    #[arg(long)]
    src_emb: PathBuf,
    /// Target `.vec` file.
    #[arg(long)]
    tgt_emb: Option<PathBuf>,
    /// Mapper checkpoint; without one both tables are taken as already aligned.
    #[arg(long)]
    mapper: Option<PathBuf>,
    /// Labeled source development set.
    #[arg(long)]
    src_dev: Option<PathBuf>,
    /// Labeled target development set, only used for model selection.
    #[arg(long)]
    tgt_dev: Option<PathBuf>,
    /// Labeled target test set, only used for model selection and reporting.
    #[arg(long)]
    tgt_test: Option<PathBuf>,
    /// Tag scheme of the input CoNLL files.
    #[arg(long, default_value = "iob2")]
    input_scheme: TagScheme,
    #[arg(long, default_value = "src")]
    src_lang: String,
    #[arg(long, default_value = "tgt")]
    tgt_lang: String,
    #[arg(long, default_value_t = DEFAULT_LOAD_LIMIT)]
    max_vocab: usize,
    /// Selection split for the primary checkpoint.
    #[arg(long = "select")]
    selection: Option<Selection>,
    /// Progress log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Labeled source training set.
    #[arg(long)]
    train: PathBuf,
    /// Unlabeled target text, used to build the shared character table.
    #[arg(long)]
    tgt_train: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Tag scheme the model is trained in.
    #[arg(long)]
    scheme: Option<TagScheme>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint for the selection split; other scored splits are written
    /// next to it as `NAME.<split>.EXT`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Pretrained model checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Labeled source training set.
    #[arg(long)]
    src_train: PathBuf,
    /// Unlabeled target training text.
    #[arg(long)]
    tgt_train: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    /// Comma-separated seeds; one run per seed.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Output checkpoint; with several seeds each run writes `NAME.seedN.EXT`.
    #[arg(long)]
    out: PathBuf,
    /// Run manifest; defaults to the output path with a `.manifest` suffix.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

/// Tables and splits in the common space.
struct Loaded {
    source: EmbeddingTable,
    target: Option<EmbeddingTable>,
    src_dev: Option<Dataset>,
    tgt_dev: Option<Dataset>,
    tgt_test: Option<Dataset>,
}

impl Loaded {
    fn new(d: &DataArgs, variant: Variant) -> Result<Self> {
        let mapper = match (&d.mapper, variant.uses_mapping()) {
            (Some(p), true) => Some(load_mapper(p)?),
            _ => None,
        };
        let source = to_common(&load_table(&d.src_emb, &d.src_lang, Some(d.max_vocab))?, Lang::Source, mapper.as_ref())?;
        let target = d
            .tgt_emb
            .as_ref()
            .map(|p| to_common(&load_table(p, &d.tgt_lang, Some(d.max_vocab))?, Lang::Target, mapper.as_ref()))
            .transpose()?;
        if let Some(t) = &target {
            if t.dim() != source.dim() {
                return Err(Error::Usage(format!(
                    "embedding dimensions differ: source {} vs target {}",
                    source.dim(),
                    t.dim()
                )));
            }
        }
        let read = |p: &Option<PathBuf>, lang: &str, role| p.as_ref().map(|p| read_labeled(p, lang, role, d.input_scheme)).transpose();
        let tgt_dev = read(&d.tgt_dev, &d.tgt_lang, Role::Dev)?;
        let tgt_test = read(&d.tgt_test, &d.tgt_lang, Role::Test)?;
        if (tgt_dev.is_some() || tgt_test.is_some()) && target.is_none() {
            return Err(Error::Usage("target evaluation sets need --tgt-emb".into()));
        }
        Ok(Loaded {
            src_dev: read(&d.src_dev, &d.src_lang, Role::Dev)?,
            tgt_dev,
            tgt_test,
            source,
            target,
        })
    }

    fn eval_sets(&self) -> EvalSets<'_> {
        EvalSets {
            src_dev: self.src_dev.as_ref().map(|data| EvalSet { data, table: &self.source }),
            tgt_dev: self.tgt_dev.as_ref().zip(self.target.as_ref()).map(|(data, table)| EvalSet { data, table }),
            tgt_test: self.tgt_test.as_ref().zip(self.target.as_ref()).map(|(data, table)| EvalSet { data, table }),
        }
    }
}

fn record_line(r: &EvalRecord) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), pct);
    format!("src_dev {}\ttgt_dev {}\ttgt_test {}", f(r.src_dev), f(r.tgt_dev), f(r.tgt_test))
}

fn save_outcome(out: &TrainOutcome, path: &Path, cfg: &TrainingConfig, extra: &ConfigMap) -> Result<()> {
    let mut entries = config_entries(cfg);
    entries.extend(extra.clone());
    entries.insert("run.epochs_done".into(), out.epochs_done.to_string());
    for (mode, idx, tagger) in &out.by_mode {
        let mut e = entries.clone();
        e.insert("run.selection".into(), mode.to_string());
        e.insert("run.selected_step".into(), out.records[*idx].step.to_string());
        let p = if *mode == cfg.selection { path.to_path_buf() } else { with_tag(path, &mode.to_string()) };
        tagger_to_checkpoint(tagger, &e).save(&p)?;
        log::info!("wrote {} ({mode})", p.display());
    }
    Ok(())
}

fn write_log(path: Option<&PathBuf>, lines: &[String]) -> Result<()> {
    match path {
        Some(p) => write_lines(p, std::iter::once(LOG_HEADER.to_string()).chain(lines.iter().cloned())),
        None => Ok(()),
    }
}

pub fn pretrain(a: PretrainArgs) -> Result<()> {
    let mut cfg = TrainingConfig::default();
    a.data.config.apply(&mut cfg)?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.data.selection {
        cfg.selection = s;
    }
    cfg.validate()?;

    let d = &a.data;
    let train = read_labeled(&a.train, &d.src_lang, Role::Train, d.input_scheme)?;
    let tgt_train = a.tgt_train.as_ref().map(|p| read_tokens(p, &d.tgt_lang, Role::Train)).transpose()?;
    let loaded = Loaded::new(d, cfg.variant)?;
    let mut char_sources = vec![&train];
    char_sources.extend(tgt_train.as_ref());

    let mut rng = Rng::new(cfg.seed);
    let tagger = new_tagger(&cfg, &train, &char_sources, loaded.source.dim(), &mut rng)?;
    let out = pretrain_source(tagger, &train, &loaded.source, &loaded.eval_sets(), &cfg, &mut rng)?;
    write_log(d.log.as_ref(), &out.log)?;
    save_outcome(&out, &a.out, &cfg, &ConfigMap::new())?;

    let train_f1 = evaluate(&out.tagger, Side::Source, &loaded.source, &train.filter_max_len(cfg.max_len))?;
    println!("train_f1\t{}", pct(train_f1.overall.f1));
    println!("selected_step\t{}", out.records[out.selected].step);
    println!("{}", record_line(&out.records[out.selected]));
    Ok(())
}

pub fn finetune(a: FinetuneArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.model)?;
    let base = tagger_from_checkpoint(&ck)?;
    let mut cfg = config_from_checkpoint(&ck).map_err(|e| Error::Artifact(format!("bad stored config: {e}")))?;
    let epoch_offset = ck
        .config
        .get("run.epochs_done")
        .and_then(|v| v.parse().ok())
        .unwrap_or(cfg.epochs);
    a.data.config.apply(&mut cfg)?;
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = a.data.selection {
        cfg.selection = s;
    }
    cfg.validate()?;
    if a.seeds.is_empty() {
        return Err(Error::Usage("no seeds given".into()));
    }
    let d = &a.data;
    if d.tgt_emb.is_none() {
        return Err(Error::Usage("finetune needs --tgt-emb".into()));
    }
    let src_train = read_labeled(&a.src_train, &d.src_lang, Role::Train, d.input_scheme)?;
    let tgt_train = read_tokens(&a.tgt_train, &d.tgt_lang, Role::Train)?;
    let loaded = Loaded::new(d, cfg.variant)?;
    let target = loaded.target.as_ref().expect("checked above");
    let eval = loaded.eval_sets();

    let mut manifest = vec![
        "method=augmented_finetune".to_string(),
        format!("model={}", a.model.display()),
        format!("seeds={}", a.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
    ];
    manifest.extend(cfg.pairs().into_iter().map(|(k, v)| format!("config.{k}={v}")));

    let mut runs: Vec<(u64, PathBuf, EvalRecord)> = Vec::new();
    for &seed in &a.seeds {
        let mut rng = Rng::new(seed);
        let out = augmented_finetune(base.clone(), &src_train, &loaded.source, &tgt_train, target, &eval, &cfg, epoch_offset, &mut rng)?;
        let path = if a.seeds.len() == 1 { a.out.clone() } else { with_tag(&a.out, &format!("seed{seed}")) };
        let mut extra = ConfigMap::new();
        extra.insert("run.seed".into(), seed.to_string());
        save_outcome(&out, &path, &cfg, &extra)?;
        let log_path = d.log.as_ref().map(|p| if a.seeds.len() == 1 { p.clone() } else { with_tag(p, &format!("seed{seed}")) });
        write_log(log_path.as_ref(), &out.log)?;
        let rec = out.records[out.selected].clone();
        println!("seed {seed}\tstart {}", record_line(&out.records[0]));
        println!("seed {seed}\tfinal {}", record_line(&rec));
        runs.push((seed, path, rec));
    }

    for (seed, path, rec) in &runs {
        manifest.push(format!("seed.{seed}.checkpoint={}", path.display()));
        manifest.push(format!("seed.{seed}.step={}", rec.step));
        for (name, v) in [("src_dev", rec.src_dev), ("tgt_dev", rec.tgt_dev), ("tgt_test", rec.tgt_test)] {
            if let Some(v) = v {
                manifest.push(format!("seed.{seed}.{name}={}", pct(v)));
            }
        }
    }
    let best = runs
        .iter()
        .max_by(|x, y| {
            let s = |r: &EvalRecord| r.score(cfg.selection).unwrap_or(f64::NEG_INFINITY);
            s(&x.2).total_cmp(&s(&y.2)).then(y.0.cmp(&x.0))
        })
        .expect("at least one seed");
    manifest.push(format!("selected_checkpoint={}", best.1.display()));

    let reported = [Selection::TgtTest, Selection::TgtDev, Selection::SrcDev]
        .into_iter()
        .find(|m| runs.iter().all(|r| r.2.score(*m).is_some()));
    if let (Some(m), true) = (reported, runs.len() > 1) {
        let vals: Vec<f64> = runs.iter().map(|r| 100.0 * r.2.score(m).expect("checked")).collect();
        let s = multi_seed_report(&vals)?;
        println!("{m}\tmean {:.2}\tstd {:.2}\tmax {:.2}", s.mean, s.std, s.max);
        manifest.push(format!("summary.{m}.mean={:.2}", s.mean));
        manifest.push(format!("summary.{m}.std={:.2}", s.std));
        manifest.push(format!("summary.{m}.max={:.2}", s.max));
    }
    let mpath = a.manifest.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".manifest");
        p.into()
    });
    write_lines(&mpath, manifest)
}
