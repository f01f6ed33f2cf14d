//! Training pipeline: source pretraining in the common space, pseudo-label
//! generation on unlabeled target text, and joint fine-tuning of the source
//! and target encoders over a shared head.

mod config;
mod report;

pub use config::{lr_at, Selection, TrainingConfig, Variant};
pub use report::{multi_seed_report, select_model, EvalRecord, SeedStats};

use std::collections::BTreeSet;

use crate::align::LinearMapper;
use crate::corpus::{entity_f1, CharIndex, Dataset, EntityScores, Label, TagScheme, TaggedSentence};
use crate::embeddings::EmbeddingTable;
use crate::numeric::{clipped_sgd_step, Matrix, Rng};
use crate::tagger::{Prepared, Side, Tagger, TaggerParams};
use crate::{Error, Result};

/// Header of the tab-separated progress log.
pub const LOG_HEADER: &str = "step\tloss_src\tloss_tgt_src\tloss_tgt_tgt\tlr\tselect_f1";

/// A labeled split and the table its words are looked up in.
#[derive(Clone, Copy)]
pub struct EvalSet<'a> {
    pub data: &'a Dataset,
    pub table: &'a EmbeddingTable,
}

#[derive(Clone, Copy, Default)]
pub struct EvalSets<'a> {
    pub src_dev: Option<EvalSet<'a>>,
    pub tgt_dev: Option<EvalSet<'a>>,
    pub tgt_test: Option<EvalSet<'a>>,
}

impl EvalSets<'_> {
    fn has(&self, mode: Selection) -> bool {
        match mode {
            Selection::SrcDev => self.src_dev.is_some(),
            Selection::TgtDev => self.tgt_dev.is_some(),
            Selection::TgtTest => self.tgt_test.is_some(),
        }
    }
}

/// Result of a training stage.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot chosen by the selection split.
    pub tagger: Tagger,
    pub records: Vec<EvalRecord>,
    pub selected: usize,
    /// Best snapshot and its record index for every split that was scored.
    pub by_mode: Vec<(Selection, usize, Tagger)>,
    /// Per-update training loss (sum of the active terms).
    pub losses: Vec<f64>,
    /// Progress lines matching [`LOG_HEADER`].
    pub log: Vec<String>,
    /// Epoch counter reached, for continuing the schedule.
    pub epochs_done: usize,
}

/// Pseudo-labeled target sentences no longer than `threshold`.
#[derive(Debug, Clone)]
pub struct PseudoDataset {
    pub data: Dataset,
    pub threshold: usize,
    pub round: usize,
}

/// Encoder used for target-language text: the target encoder when present.
pub fn target_side(tagger: &Tagger) -> Side {
    if tagger.has_target_encoder() {
        Side::Target
    } else {
        Side::Source
    }
}

/// Entity types found in the tags of `datasets`.
pub fn entity_types(datasets: &[&Dataset]) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for d in datasets {
        for s in &d.sentences {
            for t in s.tags.iter().flatten() {
                if let Some(k) = Label::parse(t)?.kind() {
                    out.insert(k.to_string());
                }
            }
        }
    }
    Ok(out)
}

/// `O` followed by every prefix of the scheme for each type.
pub fn tag_inventory(types: &BTreeSet<String>, scheme: TagScheme) -> Vec<String> {
    let prefixes: &[&str] = match scheme {
        TagScheme::Iob1 | TagScheme::Iob2 => &["B", "I"],
        TagScheme::Iobes => &["B", "I", "E", "S"],
    };
    std::iter::once("O".to_string())
        .chain(types.iter().flat_map(|t| prefixes.iter().map(move |p| format!("{p}-{t}"))))
        .collect()
}

/// Character index over every token of the given datasets.
pub fn char_index(datasets: &[&Dataset]) -> CharIndex {
    CharIndex::from_chars(
        datasets
            .iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tokens.iter())
            .flat_map(|t| t.chars()),
    )
}

/// Fresh source model for `cfg.variant`, with tags from `labeled` and
/// characters from `char_sources`.
pub fn new_tagger(cfg: &TrainingConfig, labeled: &Dataset, char_sources: &[&Dataset], emb_dim: usize, rng: &mut Rng) -> Result<Tagger> {
    cfg.validate()?;
    let tags = tag_inventory(&entity_types(&[labeled])?, cfg.scheme);
    Tagger::new(cfg.model_config(emb_dim), tags, cfg.scheme, char_index(char_sources), rng)
}

/// Source and target tables in the space the tagger sees. The monolingual
/// variant keeps both native; the others apply the mapper.
pub fn common_tables(
    variant: Variant,
    mapper: Option<&LinearMapper>,
    source: &EmbeddingTable,
    target: &EmbeddingTable,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    if !variant.uses_mapping() {
        return Ok((source.clone(), target.clone()));
    }
    match mapper {
        Some(m) => m.common_space(source, target),
        None => Err(Error::usage(format!("variant {variant} needs a mapper"))),
    }
}

pub fn predict_dataset(tagger: &Tagger, side: Side, table: &EmbeddingTable, data: &Dataset) -> Result<Vec<Vec<String>>> {
    data.sentences
        .iter()
        .map(|s| tagger.predict(side, table, &s.tokens))
        .collect()
}

pub fn evaluate(tagger: &Tagger, side: Side, table: &EmbeddingTable, data: &Dataset) -> Result<EntityScores> {
    let pred = predict_dataset(tagger, side, table, data)?;
    entity_f1(data, &pred, tagger.scheme)
}

fn evaluate_sets(tagger: &Tagger, sets: &EvalSets, step: usize, epoch: usize, round: Option<usize>) -> Result<EvalRecord> {
    let score = |s: Option<EvalSet>, side: Side| -> Result<Option<f64>> {
        s.map(|s| evaluate(tagger, side, s.table, s.data).map(|r| r.overall.f1))
            .transpose()
    };
    let tside = target_side(tagger);
    Ok(EvalRecord {
        step,
        epoch,
        round,
        src_dev: score(sets.src_dev, Side::Source)?,
        tgt_dev: score(sets.tgt_dev, tside)?,
        tgt_test: score(sets.tgt_test, tside)?,
    })
}

fn prepare_all(tagger: &Tagger, table: &EmbeddingTable, data: &Dataset) -> Result<Vec<Prepared>> {
    data.sentences.iter().map(|s| tagger.prepare(table, s)).collect()
}

fn sgd(params: &mut TaggerParams, grads: &TaggerParams, lr: f64, clip: f64) -> Result<f64> {
    let g: Vec<&Matrix> = grads.named_tensors().into_iter().map(|(_, m)| m).collect();
    let mut p: Vec<&mut Matrix> = params.named_tensors_mut().into_iter().map(|(_, m)| m).collect();
    clipped_sgd_step(&mut p, &g, lr, clip)
}

fn fmt_loss(v: Option<f64>) -> String {
    v.map_or("nan".to_string(), |v| format!("{v:.6}"))
}

/// Keeps the best snapshot for every provided selection split; ties keep
/// the earlier one.
struct Keeper {
    mode: Selection,
    records: Vec<EvalRecord>,
    best: Vec<(Selection, f64, usize, Tagger)>,
    log: Vec<String>,
}

impl Keeper {
    fn new(mode: Selection) -> Self {
        Keeper {
            mode,
            records: Vec::new(),
            best: Vec::new(),
            log: Vec::new(),
        }
    }

    /// Records an evaluation; returns whether it improved the primary split.
    fn offer(&mut self, tagger: &Tagger, rec: EvalRecord, losses: [Option<f64>; 3], lr: f64) -> bool {
        let score = rec.score(self.mode).unwrap_or(f64::NEG_INFINITY);
        self.log.push(format!(
            "{}\t{}\t{}\t{}\t{lr:.6}\t{score:.4}",
            rec.step,
            fmt_loss(losses[0]),
            fmt_loss(losses[1]),
            fmt_loss(losses[2])
        ));
        log::info!("step {} {}={score:.4}", rec.step, self.mode);
        let idx = self.records.len();
        let mut improved = false;
        for mode in Selection::ALL {
            let Some(s) = rec.score(mode) else { continue };
            match self.best.iter_mut().find(|b| b.0 == mode) {
                Some(b) if s > b.1 => {
                    *b = (mode, s, idx, tagger.clone());
                    improved |= mode == self.mode;
                }
                Some(_) => {}
                None => {
                    self.best.push((mode, s, idx, tagger.clone()));
                    improved |= mode == self.mode;
                }
            }
        }
        self.records.push(rec);
        improved
    }

    fn finish(self, losses: Vec<f64>, epochs_done: usize) -> Result<TrainOutcome> {
        let primary = self
            .best
            .iter()
            .position(|b| b.0 == self.mode)
            .ok_or_else(|| Error::usage("training produced no evaluation"))?;
        let by_mode: Vec<(Selection, usize, Tagger)> = self.best.into_iter().map(|(m, _, i, t)| (m, i, t)).collect();
        let (_, selected, tagger) = by_mode[primary].clone();
        debug_assert_eq!(select_model(&self.records, self.mode).ok(), Some(selected));
        Ok(TrainOutcome {
            tagger,
            records: self.records,
            selected,
            by_mode,
            losses,
            log: self.log,
            epochs_done,
        })
    }
}

/// Mean of the window, `None` when empty.
fn window_mean(v: &mut Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.clear();
    Some(m)
}

/// Supervised training of the source encoder and head on `train`, looked up
/// in `table`. Sentences longer than `cfg.max_len` are dropped.
pub fn pretrain_source(
    mut tagger: Tagger,
    train: &Dataset,
    table: &EmbeddingTable,
    eval: &EvalSets,
    cfg: &TrainingConfig,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !eval.has(cfg.selection) {
        return Err(Error::usage(format!("selection split {} was not provided", cfg.selection)));
    }
    let mut train = train.filter_max_len(cfg.max_len);
    if train.is_empty() {
        return Err(Error::usage("no training sentences"));
    }
    if train.scheme != Some(tagger.scheme) {
        train.convert(tagger.scheme)?;
    }
    let data = prepare_all(&tagger, table, &train)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut keeper = Keeper::new(cfg.selection);
    let mut losses = Vec::new();
    let mut window = Vec::new();
    let mut step = 0;
    let mut lr = lr_at(cfg, 0);
    for epoch in 0..cfg.epochs {
        lr = lr_at(cfg, epoch);
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = tagger.backward_pass(Side::Source, table, &batch, Some(rng))?;
            sgd(&mut tagger.params, &grads, lr, cfg.clip)?;
            losses.push(loss);
            window.push(loss);
            step += 1;
            if step % cfg.eval_every == 0 {
                let rec = evaluate_sets(&tagger, eval, step, epoch, None)?;
                keeper.offer(&tagger, rec, [window_mean(&mut window), None, None], lr);
            }
        }
    }
    if keeper.records.last().is_none_or(|r| r.step != step) {
        let rec = evaluate_sets(&tagger, eval, step, cfg.epochs, None)?;
        keeper.offer(&tagger, rec, [window_mean(&mut window), None, None], lr);
    }
    keeper.finish(losses, cfg.epochs)
}

/// Tags the target sentences no longer than `threshold` with the source
/// encoder.
pub fn pseudo_label_at(tagger: &Tagger, table: &EmbeddingTable, target: &Dataset, threshold: usize, round: usize) -> Result<PseudoDataset> {
    let mut data = Dataset::new(target.language.clone(), target.role, Some(tagger.scheme));
    for s in target.sentences.iter().filter(|s| s.len() <= threshold) {
        let tags = tagger.predict(Side::Source, table, &s.tokens)?;
        data.sentences.push(TaggedSentence::new(s.tokens.clone(), Some(tags))?);
    }
    Ok(PseudoDataset { data, threshold, round })
}

/// Samples a length threshold uniformly between the shortest and longest
/// target sentence and pseudo-labels what fits under it.
pub fn generate_pseudo_labels(tagger: &Tagger, table: &EmbeddingTable, target: &Dataset, rng: &mut Rng, round: usize) -> Result<PseudoDataset> {
    let (min, max) = target
        .length_range()
        .ok_or_else(|| Error::usage("target dataset is empty"))?;
    generate_in_range(tagger, table, target, rng, round, (min, max))
}

fn generate_in_range(
    tagger: &Tagger,
    table: &EmbeddingTable,
    target: &Dataset,
    rng: &mut Rng,
    round: usize,
    (min, max): (usize, usize),
) -> Result<PseudoDataset> {
    for _ in 0..2 {
        let l = rng.uniform_int(min as i64, max as i64)? as usize;
        if target.sentences.iter().any(|s| s.len() <= l) {
            return pseudo_label_at(tagger, table, target, l, round);
        }
    }
    Err(Error::usage(format!(
        "no target sentence fits under a threshold drawn from [{min}, {max}]"
    )))
}

/// Endless shuffled batches over `n` items.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl Batcher {
    fn new(n: usize, size: usize) -> Self {
        Batcher {
            order: (0..n).collect(),
            pos: n,
            size,
        }
    }

    fn next(&mut self, rng: &mut Rng) -> Vec<usize> {
        if self.pos >= self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let end = (self.pos + self.size).min(self.order.len());
        let b = self.order[self.pos..end].to_vec();
        self.pos = end;
        b
    }
}

/// Joint fine-tuning. Each round draws a length threshold, rebuilds the
/// pseudo-labeled target set with the current source encoder, then
/// alternates two updates per step: the source encoder on the source batch
/// and on the target batch, and the target encoder on the target batch. The
/// character table and the head are updated by both.
///
/// `epoch_offset` continues the learning-rate schedule of pretraining; it
/// advances by one per round.
#[allow(clippy::too_many_arguments)]
pub fn augmented_finetune(
    mut tagger: Tagger,
    source_train: &Dataset,
    source_table: &EmbeddingTable,
    target_train: &Dataset,
    target_table: &EmbeddingTable,
    eval: &EvalSets,
    cfg: &TrainingConfig,
    epoch_offset: usize,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !eval.has(cfg.selection) {
        return Err(Error::usage(format!("selection split {} was not provided", cfg.selection)));
    }
    if !tagger.has_target_encoder() {
        tagger.add_target_encoder();
    }
    let mut src = source_train.filter_max_len(cfg.max_len);
    if src.is_empty() {
        return Err(Error::usage("no source training sentences"));
    }
    if target_train.is_empty() {
        return Err(Error::usage("no target sentences"));
    }
    if src.scheme != Some(tagger.scheme) {
        src.convert(tagger.scheme)?;
    }
    let src_data = prepare_all(&tagger, source_table, &src)?;
    let n_steps = cfg.n_steps.unwrap_or(src_data.len().div_ceil(cfg.batch_size));
    let mut src_batches = Batcher::new(src_data.len(), cfg.batch_size);

    let mut keeper = Keeper::new(cfg.selection);
    let mut losses = Vec::new();
    let mut windows: [Vec<f64>; 3] = Default::default();
    let mut step = 0;
    let mut initial: Option<f64> = None;
    let mut stale = 0;
    let mut lr = lr_at(cfg, epoch_offset);
    let mut epoch = epoch_offset;

    // the starting point competes for selection too
    let rec = evaluate_sets(&tagger, eval, 0, epoch_offset, Some(0))?;
    keeper.offer(&tagger, rec, [None, None, None], lr);

    for round in 0..cfg.rounds {
        epoch = epoch_offset + round;
        lr = lr_at(cfg, epoch);
        let pseudo = generate_pseudo_labels(&tagger, target_table, target_train, rng, round)?;
        log::info!(
            "round {round}: threshold {}, {} pseudo-labeled sentences",
            pseudo.threshold,
            pseudo.data.size()
        );
        let tgt_data = prepare_all(&tagger, target_table, &pseudo.data)?;
        debug_assert!(tgt_data.iter().all(|p| p.words.len() <= pseudo.threshold));
        let mut tgt_batches = Batcher::new(tgt_data.len(), cfg.batch_size);
        let mut improved = false;
        let mut round_loss = 0.0;

        for _ in 0..n_steps {
            let bs: Vec<&Prepared> = src_batches.next(rng).into_iter().map(|i| &src_data[i]).collect();
            let bt: Vec<&Prepared> = tgt_batches.next(rng).into_iter().map(|i| &tgt_data[i]).collect();

            let mut g = tagger.params.zeros_like();
            let mut terms = [None, None, None];
            if cfg.use_source_term {
                terms[0] = Some(tagger.accumulate_gradient(Side::Source, source_table, &bs, Some(rng), &mut g)?);
            }
            if cfg.use_target_via_source {
                terms[1] = Some(tagger.accumulate_gradient(Side::Source, target_table, &bt, Some(rng), &mut g)?);
            }
            if terms[0].is_some() || terms[1].is_some() {
                sgd(&mut tagger.params, &g, lr, cfg.clip)?;
            }
            if cfg.use_target_via_target {
                let mut g = tagger.params.zeros_like();
                terms[2] = Some(tagger.accumulate_gradient(Side::Target, target_table, &bt, Some(rng), &mut g)?);
                sgd(&mut tagger.params, &g, lr, cfg.clip)?;
            }
            let total: f64 = terms.iter().flatten().sum();
            losses.push(total);
            round_loss += total;
            initial.get_or_insert(total);
            for (w, t) in windows.iter_mut().zip(terms) {
                w.extend(t);
            }
            step += 1;
            if step % cfg.eval_every == 0 {
                let rec = evaluate_sets(&tagger, eval, step, epoch, Some(round + 1))?;
                let w = windows.each_mut().map(window_mean);
                improved |= keeper.offer(&tagger, rec, w, lr);
            }
        }
        if keeper.records.last().is_none_or(|r| r.step != step) {
            let rec = evaluate_sets(&tagger, eval, step, epoch, Some(round + 1))?;
            let w = windows.each_mut().map(window_mean);
            improved |= keeper.offer(&tagger, rec, w, lr);
        }
        if let Some(init) = initial {
            let mean = round_loss / n_steps as f64;
            if init > 0.0 && mean > 10.0 * init {
                return Err(Error::Numerical(format!(
                    "fine-tuning diverged in round {round}: mean loss {mean:.4} vs initial {init:.4}"
                )));
            }
        }
        stale = if improved { 0 } else { stale + 1 };
        if stale >= cfg.patience {
            log::info!("no improvement for {stale} rounds, stopping");
            break;
        }
    }
    keeper.finish(losses, epoch + 1)
}

#[cfg(test)]
mod tests;
