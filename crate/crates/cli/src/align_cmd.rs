use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use xner::align::{
    adversarial_train, induce_dictionary, precision_at_1, refine_with_report, AdversarialConfig, Direction, SeedDictionary,
};
use xner::checkpoint::{mapper_to_checkpoint, ConfigMap};
use xner::embeddings::DEFAULT_LOAD_LIMIT;
use xner::numeric::Rng;
use xner::{Error, Result};

use crate::common::{create, load_table, open};

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Source `.vec` file.
    #[arg(long)]
    src_emb: PathBuf,
    /// Target `.vec` file.
    #[arg(long)]
    tgt_emb: PathBuf,
    #[arg(long, default_value = "src")]
    src_lang: String,
    #[arg(long, default_value = "tgt")]
    tgt_lang: String,
    /// `t_to_s` or `s_to_t`; defaults by target language.
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    refine_iters: usize,
    /// Vectors read from each file.
    #[arg(long, default_value_t = DEFAULT_LOAD_LIMIT)]
    max_vocab: usize,
    /// Adversarial mapper updates.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    disc_hidden: Option<usize>,
    /// Mapper updates between criterion evaluations; 0 disables.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Words per side used by the unsupervised criterion.
    #[arg(long)]
    criterion_n: Option<usize>,
    #[arg(long, default_value_t = 10)]
    csls_k: usize,
    /// Most frequent words per side considered for dictionary induction.
    #[arg(long, default_value_t = 15000)]
    dict_top_n: usize,
    /// Mapper checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Induced dictionary, `target_word source_word` per line.
    #[arg(long)]
    dict_out: Option<PathBuf>,
    /// Criterion log, tab-separated `stage step criterion`.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Gold dictionary for reporting precision@1.
    #[arg(long)]
    eval_dict: Option<PathBuf>,
}

pub fn run(a: AlignArgs) -> Result<()> {
    let source = load_table(&a.src_emb, &a.src_lang, Some(a.max_vocab))?;
    let target = load_table(&a.tgt_emb, &a.tgt_lang, Some(a.max_vocab))?;
    if source.dim() != target.dim() {
        return Err(Error::Usage(format!(
            "embedding dimensions differ: source {} vs target {}",
            source.dim(),
            target.dim()
        )));
    }
    let direction = a.direction.unwrap_or_else(|| Direction::default_for(&a.tgt_lang));
    let defaults = AdversarialConfig::default();
    let cfg = AdversarialConfig {
        w_steps: a.steps.unwrap_or(defaults.w_steps),
        disc_hidden: a.disc_hidden.unwrap_or(defaults.disc_hidden),
        eval_every: a.eval_every.unwrap_or(defaults.eval_every),
        criterion_n: a.criterion_n.unwrap_or(defaults.criterion_n),
        csls_k: a.csls_k,
        ..defaults
    };
    let mut rng = Rng::new(a.seed);
    let (adv, report) = adversarial_train(&source, &target, direction, &cfg, &mut rng)?;
    let mut log = vec!["stage\tstep\tcriterion".to_string()];
    log.extend(report.criteria.iter().map(|(s, c)| format!("adversarial\t{s}\t{c:.6}")));

    let mapper = if a.refine_iters > 0 {
        let (m, rep) = refine_with_report(&source, &target, &adv, a.refine_iters, a.csls_k, a.dict_top_n)?;
        log.push(format!("refine\t0\t{:.6}", rep.initial_criterion));
        log.extend(rep.criteria.iter().enumerate().map(|(i, c)| format!("refine\t{}\t{c:.6}", i + 1)));
        m
    } else {
        adv
    };

    let mut extra = ConfigMap::new();
    extra.insert("align.seed".into(), a.seed.to_string());
    extra.insert("align.refine_iters".into(), a.refine_iters.to_string());
    extra.insert("align.steps".into(), cfg.w_steps.to_string());
    extra.insert("align.src_lang".into(), a.src_lang.clone());
    extra.insert("align.tgt_lang".into(), a.tgt_lang.clone());
    mapper_to_checkpoint(&mapper, &extra).save(&a.out)?;

    if let Some(p) = &a.dict_out {
        let dict = induce_dictionary(&source, &target, &mapper, a.csls_k, a.dict_top_n)?;
        let mut w = create(p)?;
        dict.write(&mut w, &source, &target)?;
        w.flush()?;
    }
    if let Some(p) = &a.log_out {
        crate::common::write_lines(p, log)?;
    }
    println!("direction\t{direction}");
    println!("orthogonality_defect\t{:.3e}", mapper.orthogonality_defect());
    if let Some(p) = &a.eval_dict {
        let gold = SeedDictionary::read(open(p)?, &source, &target)?;
        if gold.size() == 0 {
            return Err(Error::Usage(format!("no usable pairs in {}", p.display())));
        }
        let p1 = precision_at_1(&source, &target, &mapper, a.csls_k, &gold)?;
        println!("precision_at_1\t{p1:.4}");
    }
    Ok(())
}
