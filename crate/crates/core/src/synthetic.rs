//! Seeded synthetic fixtures: embedding pairs related by a planted rotation
//! and small bilingual NER corpora.

use std::collections::HashSet;

use crate::corpus::{Dataset, Role, TagScheme, TaggedSentence};
use crate::embeddings::EmbeddingTable;
use crate::numeric::{gaussian_init, svd_square, Matrix, Rng};
use crate::Result;

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs()))
            .unwrap_or(c);
        if a[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                let t = a[(p, k)];
                a[(p, k)] = a[(c, k)];
                a[(c, k)] = t;
            }
            det = -det;
        }
        det *= a[(c, c)];
        for r in c + 1..n {
            let f = a[(r, c)] / a[(c, c)];
            for k in c..n {
                a[(r, k)] -= f * a[(c, k)];
            }
        }
    }
    det
}

/// Uniformly random rotation with determinant +1.
pub fn random_rotation(rng: &mut Rng, d: usize) -> Matrix {
    let g = gaussian_init(rng, d, d, 1.0).expect("positive scale");
    let s = svd_square(&g).expect("finite gaussian matrix");
    let mut q = s.u.matmul_t(&s.v).expect("square factors");
    if determinant(&q) < 0.0 {
        for r in 0..d {
            q[(r, 0)] = -q[(r, 0)];
        }
    }
    q
}

/// Source and target tables with `target row i = source row i . rotation +
/// noise`, so the rotation maps target rows back onto source rows.
#[derive(Debug, Clone)]
pub struct AlignmentFixture {
    pub source: EmbeddingTable,
    pub target: EmbeddingTable,
    pub rotation: Matrix,
}

impl AlignmentFixture {
    /// Row pairs `(target row, source row)` that translate each other.
    pub fn gold_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.source.len()).map(|i| (i, i)).collect()
    }
}

/// Points with independent, skewed coordinates of decreasing scale, so the
/// cloud has no rotational symmetry for an adversary to get lost in.
pub fn anisotropic_cloud(rng: &mut Rng, n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |_, c| {
        let scale = 0.85f64.powi(c as i32);
        // centred unit exponential
        let e = -(1.0 - rng.uniform()).ln() - 1.0;
        scale * e
    })
}

pub fn rotation_fixture(n: usize, d: usize, noise: f64, seed: u64) -> Result<AlignmentFixture> {
    let mut rng = Rng::new(seed);
    let x = anisotropic_cloud(&mut rng, n, d);
    let rotation = random_rotation(&mut rng, d);
    let mut y = x.matmul(&rotation)?;
    if noise > 0.0 {
        y.axpy(1.0, &gaussian_init(&mut rng, n, d, noise)?)?;
    }
    let source = EmbeddingTable::from_matrix("src", (0..n).map(|i| format!("s{i}")).collect(), x)?;
    let target = EmbeddingTable::from_matrix("tgt", (0..n).map(|i| format!("t{i}")).collect(), y)?;
    Ok(AlignmentFixture {
        source,
        target,
        rotation,
    })
}

pub const ENTITY_TYPES: [&str; 4] = ["PER", "LOC", "ORG", "MISC"];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "so", "vi", "de", "ga", "po", "zu", "be", "fi", "ho", "ja", "wu", "xe",
    "qo", "ce", "ly", "ma", "tor", "sen",
];

/// Knobs of [`ner_fixture`].
#[derive(Debug, Clone)]
pub struct NerFixtureConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub dim: usize,
    /// Share of mentions whose name carries no type information in its
    /// embedding, so only the cue word reveals the type.
    pub neutral_rate: f64,
    /// Gaussian noise added to the rotated target vectors.
    pub noise: f64,
    /// Probability of swapping neighbouring filler words on the target side.
    pub swap_rate: f64,
    pub seed: u64,
}

impl Default for NerFixtureConfig {
    fn default() -> Self {
        NerFixtureConfig {
            n_train: 800,
            n_dev: 200,
            n_test: 200,
            dim: 16,
            neutral_rate: 0.35,
            noise: 0.05,
            swap_rate: 0.5,
            seed: 0,
        }
    }
}

/// Two languages generated from one tag grammar. The target vocabulary is a
/// letter-cipher renaming of the source vocabulary, target vectors are the
/// source vectors rotated plus noise, and cue words follow the name they
/// type on the target side while they precede it on the source side.
/// `target_train` carries no tags.
#[derive(Debug, Clone)]
pub struct NerFixture {
    pub source_train: Dataset,
    pub source_dev: Dataset,
    pub source_test: Dataset,
    pub target_train: Dataset,
    pub target_dev: Dataset,
    pub target_test: Dataset,
    pub source_table: EmbeddingTable,
    pub target_table: EmbeddingTable,
    pub rotation: Matrix,
}

impl NerFixture {
    /// Row pairs `(target row, source row)` that translate each other.
    pub fn gold_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.source_table.len()).map(|i| (i, i)).collect()
    }
}

struct Lexicon {
    fillers: Vec<usize>,
    cues: Vec<Vec<usize>>,
    names: Vec<Vec<usize>>,
    neutral: Vec<usize>,
    words: Vec<String>,
}

fn fresh_word(rng: &mut Rng, seen: &mut HashSet<String>, syllables: usize) -> String {
    loop {
        let w: String = (0..syllables).map(|_| SYLLABLES[rng.index(SYLLABLES.len())]).collect();
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

fn lexicon(rng: &mut Rng) -> Lexicon {
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    let mut take = |rng: &mut Rng, n: usize, syl: usize| -> Vec<usize> {
        (0..n)
            .map(|_| {
                words.push(fresh_word(rng, &mut seen, syl));
                words.len() - 1
            })
            .collect()
    };
    let fillers = take(rng, 60, 2);
    let cues = (0..ENTITY_TYPES.len()).map(|_| take(rng, 2, 1)).collect();
    let names = (0..ENTITY_TYPES.len()).map(|_| take(rng, 20, 3)).collect();
    let neutral = take(rng, 30, 3);
    Lexicon {
        fillers,
        cues,
        names,
        neutral,
        words,
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Source embeddings: fillers scattered, cues and names clustered by type,
/// neutral names in a cluster of their own.
fn lexicon_vectors(lex: &Lexicon, dim: usize, rng: &mut Rng) -> Result<Matrix> {
    let centre = |rng: &mut Rng| gaussian_init(rng, 1, dim, 1.5);
    let mut m = gaussian_init(rng, lex.words.len(), dim, 0.5)?;
    let mut shift = |rows: &[usize], c: &Matrix| {
        for &r in rows {
            for j in 0..dim {
                m[(r, j)] += c[(0, j)];
            }
        }
    };
    for t in 0..ENTITY_TYPES.len() {
        shift(&lex.cues[t], &centre(rng)?);
        shift(&lex.names[t], &centre(rng)?);
    }
    shift(&lex.neutral, &centre(rng)?);
    Ok(m)
}

/// Token (word id, capitalized, tag) of one generated sentence.
type Token = (usize, bool, String);

fn filler_run(lex: &Lexicon, rng: &mut Rng) -> Vec<Token> {
    let n = 1 + rng.index(3);
    (0..n)
        .map(|_| (lex.fillers[rng.index(lex.fillers.len())], false, "O".to_string()))
        .collect()
}

/// One sentence in source order and in target order.
fn sentence_pair(lex: &Lexicon, cfg: &NerFixtureConfig, rng: &mut Rng) -> (Vec<Token>, Vec<Token>) {
    let mentions = rng.index(4);
    let first = filler_run(lex, rng);
    let mut src = first.clone();
    let mut tgt = first;
    for _ in 0..mentions {
        let t = rng.index(ENTITY_TYPES.len());
        let kind = ENTITY_TYPES[t];
        let max_len = [2, 2, 3, 1][t];
        let len = 1 + rng.index(max_len);
        let neutral = rng.bernoulli(cfg.neutral_rate);
        let pool = if neutral { &lex.neutral } else { &lex.names[t] };
        let name: Vec<Token> = (0..len)
            .map(|k| {
                let tag = if k == 0 { format!("B-{kind}") } else { format!("I-{kind}") };
                (pool[rng.index(pool.len())], true, tag)
            })
            .collect();
        let cue = (neutral || rng.bernoulli(0.7))
            .then(|| (lex.cues[t][rng.index(lex.cues[t].len())], false, "O".to_string()));
        src.extend(cue.clone());
        src.extend(name.iter().cloned());
        tgt.extend(name);
        tgt.extend(cue);
        let tail = filler_run(lex, rng);
        src.extend(tail.iter().cloned());
        tgt.extend(tail);
    }
    for i in 1..tgt.len() {
        if tgt[i].2 == "O" && tgt[i - 1].2 == "O" && !tgt[i].1 && rng.bernoulli(cfg.swap_rate) {
            let both_fillers = lex.fillers.contains(&tgt[i].0) && lex.fillers.contains(&tgt[i - 1].0);
            if both_fillers {
                tgt.swap(i, i - 1);
            }
        }
    }
    (src, tgt)
}

fn render(tokens: &[Token], words: &[String], labeled: bool) -> Result<TaggedSentence> {
    let toks = tokens
        .iter()
        .map(|(w, cap, _)| if *cap { capitalize(&words[*w]) } else { words[*w].clone() })
        .collect();
    let tags = labeled.then(|| tokens.iter().map(|t| t.2.clone()).collect());
    TaggedSentence::new(toks, tags)
}

/// Bilingual NER corpus pair for transfer experiments. Tags are IOB2.
pub fn ner_fixture(cfg: &NerFixtureConfig) -> Result<NerFixture> {
    let mut rng = Rng::new(cfg.seed);
    let lex = lexicon(&mut rng);
    let mut letters: Vec<char> = ('a'..='z').collect();
    rng.shuffle(&mut letters);
    let cipher = |w: &str| -> String { w.chars().map(|c| letters[(c as u8 - b'a') as usize]).collect() };
    let target_words: Vec<String> = lex.words.iter().map(|w| cipher(w)).collect();

    let x = lexicon_vectors(&lex, cfg.dim, &mut rng)?;
    let rotation = random_rotation(&mut rng, cfg.dim);
    let mut y = x.matmul(&rotation)?;
    if cfg.noise > 0.0 {
        y.axpy(1.0, &gaussian_init(&mut rng, y.rows(), cfg.dim, cfg.noise)?)?;
    }
    let source_table = EmbeddingTable::from_matrix("src", lex.words.clone(), x)?;
    let target_table = EmbeddingTable::from_matrix("tgt", target_words.clone(), y)?;

    let mut split = |n: usize, role: Role, target_labeled: bool| -> Result<(Dataset, Dataset)> {
        let mut s = Dataset::new("src", role, Some(TagScheme::Iob2));
        let mut t = Dataset::new("tgt", role, target_labeled.then_some(TagScheme::Iob2));
        for _ in 0..n {
            let (a, b) = sentence_pair(&lex, cfg, &mut rng);
            s.sentences.push(render(&a, &lex.words, true)?);
            t.sentences.push(render(&b, &target_words, target_labeled)?);
        }
        Ok((s, t))
    };
    let (source_train, target_train) = split(cfg.n_train, Role::Train, false)?;
    let (source_dev, target_dev) = split(cfg.n_dev, Role::Dev, true)?;
    let (source_test, target_test) = split(cfg.n_test, Role::Test, true)?;
    Ok(NerFixture {
        source_train,
        source_dev,
        source_test,
        target_train,
        target_dev,
        target_test,
        source_table,
        target_table,
        rotation,
    })
}

/// Corpus where every tag owns one embedding direction: entity words of
/// type `t` lie along axis `t`, outside words along the last axis. Tags are
/// IOB2 with single-token mentions.
pub fn separable_corpus(n: usize, seed: u64) -> Result<(Dataset, EmbeddingTable)> {
    let mut rng = Rng::new(seed);
    let dim = ENTITY_TYPES.len() + 1;
    let per_class = 8;
    let mut words = Vec::new();
    let mut rows = Vec::new();
    for class in 0..dim {
        for k in 0..per_class {
            words.push(format!("w{class}x{k}"));
            let mut v: Vec<f64> = (0..dim).map(|_| 0.05 * rng.normal()).collect();
            v[class] += 2.0;
            rows.push(v);
        }
    }
    let table = EmbeddingTable::from_rows("sep", words.clone(), &rows)?;
    let mut data = Dataset::new("sep", Role::Train, Some(TagScheme::Iob2));
    for _ in 0..n {
        let len = 2 + rng.index(6);
        let mut toks = Vec::with_capacity(len);
        let mut tags = Vec::with_capacity(len);
        for _ in 0..len {
            let class = rng.index(dim);
            toks.push(words[class * per_class + rng.index(per_class)].clone());
            tags.push(match ENTITY_TYPES.get(class) {
                Some(t) => format!("B-{t}"),
                None => "O".to_string(),
            });
        }
        data.sentences.push(TaggedSentence::new(toks, Some(tags))?);
    }
    Ok((data, table))
}
