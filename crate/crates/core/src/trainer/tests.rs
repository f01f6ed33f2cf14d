use super::*;
use crate::align::Direction;
use crate::corpus::Role;
use crate::synthetic::{ner_fixture, separable_corpus, NerFixture, NerFixtureConfig};

fn small_cfg() -> TrainingConfig {
    TrainingConfig {
        char_dim: 4,
        char_hidden: 4,
        word_hidden: 8,
        dense_dim: 8,
        epochs: 5,
        eval_every: 10,
        batch_size: 8,
        rounds: 2,
        ..TrainingConfig::default()
    }
}

fn train_f1(t: &Tagger, table: &EmbeddingTable, data: &Dataset) -> f64 {
    evaluate(t, Side::Source, table, data).unwrap().overall.f1
}

#[test]
fn separable_corpus_is_learned_within_five_epochs() {
    let (data, table) = separable_corpus(300, 1).unwrap();
    let cfg = TrainingConfig {
        word_hidden: 32,
        dense_dim: 32,
        ..small_cfg()
    };
    let mut rng = Rng::new(cfg.seed);
    let tagger = new_tagger(&cfg, &data, &[&data], table.dim(), &mut rng).unwrap();
    let ev = EvalSets {
        src_dev: Some(EvalSet { data: &data, table: &table }),
        ..Default::default()
    };
    let out = pretrain_source(tagger, &data, &table, &ev, &cfg, &mut rng).unwrap();
    assert_eq!(train_f1(&out.tagger, &table, &data), 1.0);
    assert_eq!(out.records[out.selected].src_dev, Some(1.0));
    assert!(out.losses.last().unwrap() < &out.losses[0]);
}

#[test]
fn pretraining_is_bitwise_reproducible() {
    let (data, table) = separable_corpus(30, 2).unwrap();
    let mut cfg = small_cfg();
    cfg.epochs = 2;
    let run = || {
        let mut rng = Rng::new(7);
        let t = new_tagger(&cfg, &data, &[&data], table.dim(), &mut rng).unwrap();
        let ev = EvalSets {
            src_dev: Some(EvalSet { data: &data, table: &table }),
            ..Default::default()
        };
        pretrain_source(t, &data, &table, &ev, &cfg, &mut rng).unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.losses), bits(&b.losses));
    assert_eq!(a.log, b.log);
}

#[test]
fn pretraining_rejects_bad_inputs() {
    let (data, table) = separable_corpus(10, 3).unwrap();
    let cfg = small_cfg();
    let mut rng = Rng::new(0);
    let t = new_tagger(&cfg, &data, &[&data], table.dim(), &mut rng).unwrap();
    let none = EvalSets::default();
    assert!(matches!(
        pretrain_source(t.clone(), &data, &table, &none, &cfg, &mut rng),
        Err(Error::Usage(_))
    ));
    let ev = EvalSets {
        src_dev: Some(EvalSet { data: &data, table: &table }),
        ..Default::default()
    };
    let empty = data.clone_empty();
    assert!(pretrain_source(t, &empty, &table, &ev, &cfg, &mut rng).is_err());
}

#[test]
fn progress_log_is_tab_separated() {
    let (data, table) = separable_corpus(20, 4).unwrap();
    let mut cfg = small_cfg();
    cfg.epochs = 1;
    let mut rng = Rng::new(0);
    let t = new_tagger(&cfg, &data, &[&data], table.dim(), &mut rng).unwrap();
    let ev = EvalSets {
        src_dev: Some(EvalSet { data: &data, table: &table }),
        ..Default::default()
    };
    let out = pretrain_source(t, &data, &table, &ev, &cfg, &mut rng).unwrap();
    let cols = LOG_HEADER.split('\t').count();
    for line in &out.log {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), cols);
        assert!(f[1].parse::<f64>().unwrap().is_finite());
        assert_eq!(f[2], "nan");
        assert_eq!(f[3], "nan");
    }
}

#[test]
fn inventory_follows_scheme() {
    let types: BTreeSet<String> = ["PER", "LOC"].iter().map(|s| s.to_string()).collect();
    assert_eq!(tag_inventory(&types, TagScheme::Iob2), ["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]);
    assert_eq!(tag_inventory(&types, TagScheme::Iobes).len(), 9);
    assert_eq!(tag_inventory(&BTreeSet::new(), TagScheme::Iob1), ["O"]);
}

#[test]
fn monolingual_variant_keeps_native_tables() {
    let fx = tiny_fixture();
    let (s, t) = common_tables(Variant::SourceMono, None, &fx.source_table, &fx.target_table).unwrap();
    assert_eq!(s.vectors(), fx.source_table.vectors());
    assert_eq!(t.vectors(), fx.target_table.vectors());
    assert!(common_tables(Variant::CrossWord, None, &fx.source_table, &fx.target_table).is_err());
    let m = mapper(&fx);
    let (s, t) = common_tables(Variant::CrossWord, Some(&m), &fx.source_table, &fx.target_table).unwrap();
    assert!(s.vectors().max_abs_diff(t.vectors()) < 0.5);
}

fn tiny_fixture() -> NerFixture {
    ner_fixture(&NerFixtureConfig {
        n_train: 40,
        n_dev: 10,
        n_test: 10,
        dim: 8,
        seed: 5,
        ..NerFixtureConfig::default()
    })
    .unwrap()
}

fn mapper(fx: &NerFixture) -> LinearMapper {
    crate::align::procrustes_mapper(fx.source_table.vectors(), fx.target_table.vectors(), Direction::TargetToSource).unwrap()
}

/// Cross-lingual model pretrained briefly on the tiny fixture.
fn pretrained(fx: &NerFixture, variant: Variant) -> (Tagger, EmbeddingTable, EmbeddingTable, TrainingConfig) {
    let mut cfg = small_cfg();
    cfg.variant = variant;
    cfg.epochs = 2;
    let m = mapper(fx);
    let (st, tt) = common_tables(variant, Some(&m), &fx.source_table, &fx.target_table).unwrap();
    let mut rng = Rng::new(11);
    let t = new_tagger(&cfg, &fx.source_train, &[&fx.source_train, &fx.target_train], st.dim(), &mut rng).unwrap();
    let ev = EvalSets {
        src_dev: Some(EvalSet { data: &fx.source_dev, table: &st }),
        ..Default::default()
    };
    let out = pretrain_source(t, &fx.source_train, &st, &ev, &cfg, &mut rng).unwrap();
    (out.tagger, st, tt, cfg)
}

#[test]
fn pseudo_labels_match_independent_prediction() {
    let fx = tiny_fixture();
    let (t, _, tt, _) = pretrained(&fx, Variant::CrossWord);
    let (min, max) = fx.target_train.length_range().unwrap();
    let mid = (min + max) / 2;
    let p = pseudo_label_at(&t, &tt, &fx.target_train, mid, 3).unwrap();
    assert_eq!(p.threshold, mid);
    assert_eq!(p.round, 3);
    let mut expected = Vec::new();
    for s in fx.target_train.sentences.iter().filter(|s| s.len() <= mid) {
        expected.push((s.tokens.clone(), t.predict(Side::Source, &tt, &s.tokens).unwrap()));
    }
    let got: Vec<_> = p
        .data
        .sentences
        .iter()
        .map(|s| (s.tokens.clone(), s.tags.clone().unwrap()))
        .collect();
    assert_eq!(got, expected);

    let all = pseudo_label_at(&t, &tt, &fx.target_train, max, 0).unwrap();
    assert_eq!(all.data.size(), fx.target_train.size());
    let none = pseudo_label_at(&t, &tt, &fx.target_train, min - 1, 0).unwrap();
    assert!(none.data.is_empty());
}

#[test]
fn sampled_threshold_bounds_every_sentence() {
    let fx = tiny_fixture();
    let (t, _, tt, _) = pretrained(&fx, Variant::CrossWord);
    let (min, max) = fx.target_train.length_range().unwrap();
    let mut rng = Rng::new(9);
    for round in 0..10 {
        let p = generate_pseudo_labels(&t, &tt, &fx.target_train, &mut rng, round).unwrap();
        assert!((min..=max).contains(&p.threshold));
        assert!(!p.data.is_empty());
        assert!(p.data.sentences.iter().all(|s| s.len() <= p.threshold));
    }
    let again = generate_pseudo_labels(&t, &tt, &fx.target_train, &mut Rng::new(9), 0).unwrap();
    let first = generate_pseudo_labels(&t, &tt, &fx.target_train, &mut Rng::new(9), 0).unwrap();
    assert_eq!(again.data, first.data);
    let empty = Dataset::new("tgt", Role::Train, None);
    assert!(generate_pseudo_labels(&t, &tt, &empty, &mut rng, 0).is_err());
}

fn finetune(fx: &NerFixture, variant: Variant, edit: impl FnOnce(&mut TrainingConfig)) -> (Tagger, TrainOutcome) {
    let (t, st, tt, mut cfg) = pretrained(fx, variant);
    edit(&mut cfg);
    let ev = EvalSets {
        src_dev: Some(EvalSet { data: &fx.source_dev, table: &st }),
        tgt_dev: Some(EvalSet { data: &fx.target_dev, table: &tt }),
        ..Default::default()
    };
    let mut rng = Rng::new(13);
    let out = augmented_finetune(t.clone(), &fx.source_train, &st, &fx.target_train, &tt, &ev, &cfg, cfg.epochs, &mut rng).unwrap();
    (t, out)
}

#[test]
fn zero_rounds_returns_the_starting_copy() {
    let fx = tiny_fixture();
    let (t, out) = finetune(&fx, Variant::CrossWord, |c| c.rounds = 0);
    assert_eq!(out.records.len(), 1);
    assert!(out.losses.is_empty());
    let tagged = out.tagger;
    assert!(tagged.has_target_encoder());
    assert_eq!(tagged.params.source, t.params.source);
    assert_eq!(tagged.params.target.as_ref(), Some(&t.params.source));
}

#[test]
fn finetuning_updates_both_encoders_and_keeps_ties() {
    let fx = tiny_fixture();
    let (t, out) = finetune(&fx, Variant::CrossShared, |c| {
        c.selection = Selection::TgtDev;
        c.eval_every = 1000;
    });
    assert_eq!(out.log.len(), out.records.len());
    // compare against the last snapshot's state through the losses alone
    assert!(out.losses.iter().all(|l| l.is_finite()));
    let last = out.records.last().unwrap();
    assert_eq!(last.round, Some(2));
    assert_eq!(out.by_mode.len(), 2);
    for (mode, idx, _) in &out.by_mode {
        assert_eq!(select_model(&out.records, *mode).unwrap(), *idx);
    }
    let tg = &out.tagger;
    assert!(tg.params.source.word_lstm.is_tied());
    assert!(tg.params.target.as_ref().unwrap().word_lstm.is_tied());
    if out.selected > 0 {
        assert_ne!(tg.params.source, t.params.source);
        assert_ne!(tg.params.target.as_ref(), Some(&t.params.source));
    }
}

#[test]
fn ablation_flags_switch_loss_terms() {
    let fx = tiny_fixture();
    let (_, out) = finetune(&fx, Variant::CrossWord, |c| {
        c.use_target_via_source = false;
        c.rounds = 1;
    });
    for line in &out.log[1..] {
        let f: Vec<&str> = line.split('\t').collect();
        assert_ne!(f[1], "nan");
        assert_eq!(f[2], "nan");
        assert_ne!(f[3], "nan");
    }
    let (t, out) = finetune(&fx, Variant::CrossWord, |c| {
        c.use_source_term = false;
        c.use_target_via_source = false;
        c.use_target_via_target = false;
        c.rounds = 1;
    });
    assert!(out.losses.iter().all(|&l| l == 0.0));
    assert_eq!(out.tagger.params.source, t.params.source);
}
