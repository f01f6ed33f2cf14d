//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use xner::align::{adversarial_train, precision_at_1, procrustes, procrustes_mapper, refine, AdversarialConfig, Direction, SeedDictionary};
use xner::corpus::{convert_scheme, entity_f1, read_conll, CharIndex, ConllColumns, Dataset, Role, TagScheme, TaggedSentence};
use xner::embeddings::{load_vec_text, EmbeddingTable};
use xner::numeric::{gaussian_init, Matrix, Rng};
use xner::synthetic::{ner_fixture, random_rotation, rotation_fixture, NerFixtureConfig};
use xner::tagger::{crf_log_partition, crf_marginals, viterbi, ModelConfig, Prepared, Side, Tagger};
use xner::trainer::{
    augmented_finetune, common_tables, lr_at, new_tagger, pretrain_source, EvalSet, EvalSets, Selection, TrainingConfig, Variant,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// ---------------------------------------------------------------- 1

/// Path score written out from the BOS/EOS layout.
fn brute_score(scores: &Matrix, trans: &Matrix, path: &[usize]) -> f64 {
    let k = scores.cols();
    let mut s = trans[(k, path[0])] + trans[(path[path.len() - 1], k + 1)];
    for (i, &y) in path.iter().enumerate() {
        s += scores[(i, y)];
        if i > 0 {
            s += trans[(path[i - 1], y)];
        }
    }
    s
}

fn all_paths(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn crf_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst_z: f64 = 0.0;
    let mut worst_marg: f64 = 0.0;
    let mut viterbi_checked = 0;
    for case in 0..200 {
        let m = 1 + rng.index(4);
        let k = 2 + rng.index(4);
        let scores = gaussian_init(&mut rng, m, k, 2.0).unwrap();
        let trans = gaussian_init(&mut rng, k + 2, k + 2, 2.0).unwrap();
        let mut scored: Vec<(f64, Vec<usize>)> = all_paths(m, k).into_iter().map(|p| (brute_score(&scores, &trans, &p), p)).collect();
        let max = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let brute_z = max + scored.iter().map(|s| (s.0 - max).exp()).sum::<f64>().ln();
        worst_z = worst_z.max((crf_log_partition(&scores, &trans).unwrap() - brute_z).abs());

        let marg = crf_marginals(&scores, &trans).unwrap();
        for i in 0..m {
            let total: f64 = (0..k).map(|j| marg.node[(i, j)]).sum();
            worst_marg = worst_marg.max((total - 1.0).abs());
        }

        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        if scored.len() < 2 || scored[0].0 - scored[1].0 > 1e-10 {
            viterbi_checked += 1;
            if viterbi(&scores, &trans).unwrap() != scored[0].1 {
                return Outcome::Fail(format!("viterbi disagrees with enumeration on case {case}"));
            }
        }
    }
    let t = start.elapsed();
    verdict(
        worst_z < 1e-8 && worst_marg < 1e-10 && t < Duration::from_secs(10),
        format!("max |logZ err| {worst_z:.2e}, max |sum marg - 1| {worst_marg:.2e}, viterbi checked {viterbi_checked}/200, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn toy_tagger(tied: bool, seed: u64) -> (Tagger, EmbeddingTable, Vec<Prepared>) {
    let mut rng = Rng::new(seed);
    let vocab = words("the cat sat on a mat Bob ran");
    let table = EmbeddingTable::from_matrix("en", vocab.clone(), gaussian_init(&mut rng, vocab.len(), 5, 1.0).unwrap()).unwrap();
    let chars = CharIndex::from_chars(vocab.iter().flat_map(|w| w.chars()));
    let cfg = ModelConfig {
        char_dim: 4,
        char_hidden: 4,
        word_hidden: 6,
        dense_dim: 5,
        emb_dim: 5,
        use_chars: true,
        tied,
        dropout: 0.5,
        constrained: false,
    };
    let tags = words("O B-PER I-PER");
    let mut t = Tagger::new(cfg, tags, TagScheme::Iob2, chars, &mut rng).unwrap();
    t.params.head.trans = gaussian_init(&mut rng, 5, 5, 0.5).unwrap();
    let sents = [("Bob sat on the mat", "B-PER O O O O"), ("the cat ran", "O O O"), ("Bob Bob ran xyz", "B-PER I-PER O O")];
    let prepared = sents
        .iter()
        .map(|(w, g)| t.prepare(&table, &TaggedSentence::new(words(w), Some(words(g))).unwrap()).unwrap())
        .collect();
    (t, table, prepared)
}

/// Worst per-tensor relative error between backward_pass and central
/// differences of batch_loss.
fn gradient_error(t: &Tagger, table: &EmbeddingTable, batch: &[&Prepared], dropout_seed: Option<u64>) -> (f64, String) {
    let mk = || dropout_seed.map(Rng::new);
    let (_, grads) = t.backward_pass(Side::Source, table, batch, mk().as_mut()).unwrap();
    let analytic = grads.named_tensors();
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut numeric = Matrix::zeros(a.rows(), a.cols());
        for e in 0..a.rows() * a.cols() {
            let eval = |delta: f64| {
                let mut m = t.clone();
                m.params.named_tensors_mut()[ti].1.data_mut()[e] += delta;
                m.batch_loss(Side::Source, table, batch, mk().as_mut()).unwrap()
            };
            numeric.data_mut()[e] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        let diff = a.sub(&numeric).unwrap().frobenius_norm();
        let scale = a.frobenius_norm().max(numeric.frobenius_norm()).max(1e-8);
        if diff / scale > worst.0 {
            worst = (diff / scale, name.clone());
        }
    }
    worst
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for (tied, dropout) in [(false, None), (true, None), (false, Some(5)), (true, Some(6))] {
        let (t, table, p) = toy_tagger(tied, 31 + tied as u64);
        let batch: Vec<&Prepared> = p.iter().collect();
        let (err, name) = gradient_error(&t, &table, &batch, dropout);
        ok &= err < 1e-4;
        details.push(format!("{}{}: {err:.1e} ({name})", if tied { "tied" } else { "untied" }, if dropout.is_some() { "+dropout" } else { "" }));
    }
    let t = start.elapsed();
    verdict(ok && t < Duration::from_secs(60), format!("{}, {t:.2?}", details.join("; ")))
}

// ---------------------------------------------------------------- 3

fn procrustes_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(3);
    let x = gaussian_init(&mut rng, 200, 16, 1.0).unwrap();
    let omega = random_rotation(&mut rng, 16);
    let y = x.matmul(&omega).unwrap();
    let w = procrustes(&x, &y).unwrap();
    let mapped = y.matmul_t(&w).unwrap();
    let fit = mapped.max_abs_diff(&x);
    let orth = w.t_matmul(&w).unwrap().max_abs_diff(&Matrix::identity(16));
    let t = start.elapsed();
    verdict(
        fit < 1e-6 && orth < 1e-6 && t < Duration::from_secs(1),
        format!("max |W y - x| {fit:.2e}, max |W^T W - I| {orth:.2e}, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 4

fn unsupervised_alignment() -> Outcome {
    let start = Instant::now();
    let cfg = AdversarialConfig {
        w_steps: 20000,
        disc_hidden: 64,
        eval_every: 250,
        criterion_n: 300,
        ..AdversarialConfig::default()
    };
    let mut p1s = Vec::new();
    for seed in 0..5u64 {
        let fx = rotation_fixture(300, 16, 0.01, seed).unwrap();
        let (adv, _) = adversarial_train(&fx.source, &fx.target, Direction::TargetToSource, &cfg, &mut Rng::new(seed + 100)).unwrap();
        let mapper = refine(&fx.source, &fx.target, &adv, 5, 10, 300).unwrap();
        let gold = SeedDictionary { pairs: fx.gold_pairs() };
        p1s.push(precision_at_1(&fx.source, &fx.target, &mapper, 10, &gold).unwrap());
    }
    let mut sorted = p1s.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let t = start.elapsed();
    verdict(
        median >= 0.9 && t < Duration::from_secs(120),
        format!("P@1 per seed {p1s:.3?}, median {median:.3}, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 5

fn transfer_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        char_dim: 8,
        char_hidden: 8,
        word_hidden: 32,
        dense_dim: 32,
        epochs: 10,
        eval_every: 50,
        rounds: 5,
        selection: Selection::TgtDev,
        seed,
        ..TrainingConfig::default()
    }
}

/// Target test F1 of source_mono, cross_word and cross_augmented.
fn transfer_seed(seed: u64) -> [f64; 3] {
    let fx = ner_fixture(&NerFixtureConfig { seed, ..NerFixtureConfig::default() }).unwrap();
    let mapper = procrustes_mapper(fx.source_table.vectors(), fx.target_table.vectors(), Direction::TargetToSource).unwrap();
    let mut cfg = transfer_config(seed);
    let mut out = [0.0; 3];
    for (slot, variant) in [(0, Variant::SourceMono), (1, Variant::CrossWord)] {
        cfg.variant = variant;
        let (st, tt) = common_tables(variant, Some(&mapper), &fx.source_table, &fx.target_table).unwrap();
        let eval = EvalSets {
            src_dev: Some(EvalSet { data: &fx.source_dev, table: &st }),
            tgt_dev: Some(EvalSet { data: &fx.target_dev, table: &tt }),
            tgt_test: Some(EvalSet { data: &fx.target_test, table: &tt }),
        };
        let mut rng = Rng::new(seed);
        let tagger = new_tagger(&cfg, &fx.source_train, &[&fx.source_train, &fx.target_train], st.dim(), &mut rng).unwrap();
        let pre = pretrain_source(tagger, &fx.source_train, &st, &eval, &cfg, &mut rng).unwrap();
        out[slot] = pre.records[pre.selected].tgt_test.unwrap();
        if variant == Variant::CrossWord {
            cfg.variant = Variant::CrossAugmented;
            let fine = augmented_finetune(
                pre.tagger,
                &fx.source_train,
                &st,
                &fx.target_train,
                &tt,
                &eval,
                &cfg,
                pre.epochs_done,
                &mut rng,
            )
            .unwrap();
            out[2] = fine.records[fine.selected].tgt_test.unwrap();
        }
    }
    out
}

fn end_to_end_transfer() -> Outcome {
    let mut aug_wins = 0;
    let mut word_wins = 0;
    let mut rows = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..5 {
        let start = Instant::now();
        let [mono, word, aug] = transfer_seed(seed);
        slowest = slowest.max(start.elapsed());
        aug_wins += (aug >= word) as usize;
        word_wins += (word >= mono) as usize;
        rows.push(format!("seed {seed}: mono {:.1} word {:.1} aug {:.1}", 100.0 * mono, 100.0 * word, 100.0 * aug));
    }
    verdict(
        aug_wins >= 4 && word_wins >= 4 && slowest < Duration::from_secs(600),
        format!(
            "aug>=word {aug_wins}/5, word>=mono {word_wins}/5 [{}], slowest seed {slowest:.2?}",
            rows.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- 6

fn tags(s: &str) -> Vec<String> {
    words(s)
}

fn labeled(gold: &str, scheme: TagScheme) -> Dataset {
    let g = tags(gold);
    let toks = (0..g.len()).map(|i| format!("w{i}")).collect();
    let mut d = Dataset::new("x", Role::Test, Some(scheme));
    d.sentences.push(TaggedSentence::new(toks, Some(g)).unwrap());
    d
}

fn scheme_conformance() -> Outcome {
    use TagScheme::*;
    let conversions: [(&str, TagScheme, TagScheme, &str); 17] = [
        ("I-PER I-PER O I-LOC", Iob1, Iob2, "B-PER I-PER O B-LOC"),
        ("I-PER B-PER", Iob1, Iob2, "B-PER B-PER"),
        ("I-PER I-LOC", Iob1, Iob2, "B-PER B-LOC"),
        ("I-ORG I-ORG B-ORG I-ORG", Iob1, Iob2, "B-ORG I-ORG B-ORG I-ORG"),
        ("B-PER I-PER B-PER", Iob2, Iob1, "I-PER I-PER B-PER"),
        ("B-PER B-LOC", Iob2, Iob1, "I-PER I-LOC"),
        ("B-PER", Iob2, Iobes, "S-PER"),
        ("B-PER I-PER I-PER", Iob2, Iobes, "B-PER I-PER E-PER"),
        ("B-LOC B-LOC", Iob2, Iobes, "S-LOC S-LOC"),
        ("S-MISC O B-ORG E-ORG", Iobes, Iob2, "B-MISC O B-ORG I-ORG"),
        ("S-PER S-PER", Iobes, Iob1, "I-PER B-PER"),
        ("O I-PER I-PER", Iob2, Iobes, "O B-PER E-PER"),
        ("B-PER I-LOC", Iob2, Iob2, "B-PER B-LOC"),
        ("B-PER O", Iobes, Iob2, "B-PER O"),
        ("I-PER E-PER", Iobes, Iob2, "B-PER I-PER"),
        ("E-PER", Iobes, Iob2, "B-PER"),
        ("O O O", Iob1, Iobes, "O O O"),
    ];
    let mut failures = Vec::new();
    for (i, (input, from, to, expected)) in conversions.iter().enumerate() {
        let got = convert_scheme(&tags(input), *from, *to).unwrap();
        if got != tags(expected) {
            failures.push(format!("conversion {i}: `{input}` {from}->{to} gave `{}`", got.join(" ")));
        }
    }

    // (gold, gold scheme, pred, pred scheme, precision, recall, f1)
    let scores: [(&str, TagScheme, &str, TagScheme, f64, f64, f64); 8] = [
        ("B-PER I-PER O B-LOC", Iob2, "B-PER I-PER O B-LOC", Iob2, 1.0, 1.0, 1.0),
        ("B-PER O B-LOC", Iob2, "B-PER O B-ORG", Iob2, 0.5, 0.5, 0.5),
        ("B-PER I-PER", Iob2, "B-PER O", Iob2, 0.0, 0.0, 0.0),
        ("I-PER B-PER", Iob1, "B-PER I-PER", Iob2, 0.0, 0.0, 0.0),
        ("B-PER O B-LOC", Iob2, "S-PER O S-LOC", Iobes, 1.0, 1.0, 1.0),
        ("B-PER O", Iob2, "O O", Iob2, 0.0, 0.0, 0.0),
        ("O B-PER I-PER", Iob2, "O I-PER I-PER", Iob2, 1.0, 1.0, 1.0),
        ("B-PER O B-LOC B-ORG", Iob2, "B-PER O O B-ORG", Iob2, 1.0, 2.0 / 3.0, 0.8),
    ];
    for (i, (gold, gs, pred, ps, p, r, f)) in scores.iter().enumerate() {
        let s = entity_f1(&labeled(gold, *gs), &[tags(pred)], *ps).unwrap().overall;
        if s.precision != *p || s.recall != *r || (s.f1 - f).abs() > 1e-15 {
            failures.push(format!("f1 case {i}: got P {} R {} F1 {}", s.precision, s.recall, s.f1));
        }
    }

    // max(lr0 / (1 + decay * epoch), 1e-4) with lr0 = 0.1, decay = 0.01
    let cfg = TrainingConfig::default();
    for (epoch, expected) in [(0usize, 0.1), (10, 0.1 / 1.1), (1_000_000, 0.0001)] {
        let got = lr_at(&cfg, epoch);
        if got != expected {
            failures.push(format!("lr at epoch {epoch}: {got} vs {expected}"));
        }
    }
    let n = conversions.len() + scores.len();
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{n} scheme/F1 fixtures and 3 schedule values exact")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- 7

fn tying_accounting() -> Outcome {
    let fx = ner_fixture(&NerFixtureConfig {
        n_train: 50,
        n_dev: 5,
        n_test: 5,
        ..NerFixtureConfig::default()
    })
    .unwrap();
    let build = |variant: Variant| {
        let cfg = TrainingConfig {
            variant,
            ..TrainingConfig::default()
        };
        let mut t = new_tagger(&cfg, &fx.source_train, &[&fx.source_train], fx.source_table.dim(), &mut Rng::new(0)).unwrap();
        if variant == Variant::CrossAugmented {
            t.add_target_encoder();
        }
        t
    };
    let word = build(Variant::CrossWord);
    let shared = build(Variant::CrossShared);
    let aug = build(Variant::CrossAugmented);
    let (wc, ww) = word.level_counts(Side::Source).unwrap();
    let (sc, sw) = shared.level_counts(Side::Source).unwrap();
    let tensors = |t: &Tagger, level: &str| t.params.named_tensors().iter().filter(|(n, _)| n.contains(level)).count();
    let halved = 2 * sc == wc && 2 * sw == ww && tensors(&word, ".char.") == 2 * tensors(&shared, ".char.") && tensors(&word, ".word.") == 2 * tensors(&shared, ".word.");
    let (tw, ts, ta) = (
        word.params.count().recurrent_and_head,
        shared.params.count().recurrent_and_head,
        aug.params.count().recurrent_and_head,
    );
    verdict(
        halved && ts < tw && ta > tw,
        format!("char level {wc} -> {sc}, word level {ww} -> {sw}; non-embedding totals word {tw}, shared {ts}, augmented {ta}"),
    )
}

// ---------------------------------------------------------------- 8

/// Needs `XNER_CONLL_DIR` with `eng.train` and `eng.testa` (IOB1) and
/// `XNER_FASTTEXT_EN` pointing at a 300-dimensional `.vec` file.
fn monolingual_benchmark() -> Outcome {
    let (Some(dir), Some(vec)) = (std::env::var_os("XNER_CONLL_DIR"), std::env::var_os("XNER_FASTTEXT_EN")) else {
        return Outcome::Skip("XNER_CONLL_DIR / XNER_FASTTEXT_EN not set".into());
    };
    let dir = PathBuf::from(dir);
    let read = |name: &str, role| {
        let f = std::fs::File::open(dir.join(name)).map(std::io::BufReader::new);
        f.map_err(|e| e.to_string())
            .and_then(|r| read_conll(r, ConllColumns::default(), "en", role, Some(TagScheme::Iob1)).map_err(|e| e.to_string()))
    };
    let (train, dev) = match (read("eng.train", Role::Train), read("eng.testa", Role::Dev)) {
        (Ok(t), Ok(d)) => (t, d),
        (Err(e), _) | (_, Err(e)) => return Outcome::Skip(format!("data unreadable: {e}")),
    };
    let table = match std::fs::File::open(&vec).map(std::io::BufReader::new) {
        Ok(r) => match load_vec_text(r, "en", None) {
            Ok(t) => t,
            Err(e) => return Outcome::Fail(format!("embedding load failed: {e}")),
        },
        Err(e) => return Outcome::Skip(format!("embeddings unreadable: {e}")),
    };
    let cfg = TrainingConfig {
        variant: Variant::SourceMono,
        selection: Selection::SrcDev,
        ..TrainingConfig::default()
    };
    let mut rng = Rng::new(cfg.seed);
    let tagger = new_tagger(&cfg, &train, &[&train], table.dim(), &mut rng).unwrap();
    let eval = EvalSets {
        src_dev: Some(EvalSet { data: &dev, table: &table }),
        ..EvalSets::default()
    };
    match pretrain_source(tagger, &train, &table, &eval, &cfg, &mut rng) {
        Ok(out) => {
            let f1 = out.records[out.selected].src_dev.unwrap_or(0.0);
            verdict(f1 >= 0.85, format!("dev F1 {:.2}", 100.0 * f1))
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("1 crf exactness", crf_exactness),
        ("2 gradient fidelity", gradient_fidelity),
        ("3 procrustes recovery", procrustes_recovery),
        ("4 unsupervised alignment", unsupervised_alignment),
        ("5 end-to-end transfer", end_to_end_transfer),
        ("6 scheme and eval conformance", scheme_conformance),
        ("7 tying accounting", tying_accounting),
        ("8 monolingual benchmark (data-gated)", monolingual_benchmark),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Outcome::Pass(d) => println!("PASS  criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP  criterion {name}: {d}"),
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
