//! BiLSTM-CRF tagger with a shared character table and a shared head.
//!
//! Each token is represented by the final states of a character-level
//! bi-recurrent encoder concatenated with its frozen word vector. A
//! word-level bi-recurrent encoder contextualises the sequence, a point-wise
//! `tanh` dense layer and a per-tag projection produce emission scores, and
//! a linear-chain CRF scores whole tag paths. Gradients are derived by hand:
//! forward-backward marginals for the CRF, back-propagation through time for
//! both recurrent levels.

mod crf;
mod lstm;
mod params;

pub use crf::{crf_log_partition, crf_marginals, crf_nll, path_score, transition_mask, viterbi, CrfMarginals, MASK_SCORE};
pub use lstm::{BiLstm, BiTrace, LstmParams, LstmTrace};
pub use params::{CommonHead, EncoderParams, ParamCount, TaggerParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{CharIndex, TagScheme, TaggedSentence};
use crate::embeddings::EmbeddingTable;
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

/// Which word-level stack a sentence runs through. Both share the character
/// table and the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub char_dim: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub dense_dim: usize,
    pub emb_dim: usize,
    pub use_chars: bool,
    pub tied: bool,
    pub dropout: f64,
    /// Adds the scheme's transition mask to the CRF.
    pub constrained: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_dim: 25,
            char_hidden: 25,
            word_hidden: 100,
            dense_dim: 100,
            emb_dim: 300,
            use_chars: true,
            tied: false,
            dropout: 0.5,
            constrained: false,
        }
    }
}

fn field<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Artifact(format!("missing config key `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::Artifact(format!("bad value `{raw}` for `{key}`")))
}

impl ModelConfig {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("model.char_dim".into(), self.char_dim.to_string()),
            ("model.char_hidden".into(), self.char_hidden.to_string()),
            ("model.word_hidden".into(), self.word_hidden.to_string()),
            ("model.dense_dim".into(), self.dense_dim.to_string()),
            ("model.emb_dim".into(), self.emb_dim.to_string()),
            ("model.use_chars".into(), self.use_chars.to_string()),
            ("model.tied".into(), self.tied.to_string()),
            ("model.dropout".into(), self.dropout.to_string()),
            ("model.constrained".into(), self.constrained.to_string()),
        ]
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        Ok(ModelConfig {
            char_dim: field(map, "model.char_dim")?,
            char_hidden: field(map, "model.char_hidden")?,
            word_hidden: field(map, "model.word_hidden")?,
            dense_dim: field(map, "model.dense_dim")?,
            emb_dim: field(map, "model.emb_dim")?,
            use_chars: field(map, "model.use_chars")?,
            tied: field(map, "model.tied")?,
            dropout: field(map, "model.dropout")?,
            constrained: field(map, "model.constrained")?,
        })
    }

    fn word_input(&self) -> usize {
        self.emb_dim + if self.use_chars { 2 * self.char_hidden } else { 0 }
    }
}

/// A sentence resolved against a character index, an embedding table and
/// the tag inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub chars: Vec<Vec<usize>>,
    pub words: Vec<Option<usize>>,
    pub tags: Option<Vec<usize>>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

struct Forward {
    char_traces: Vec<Option<BiTrace>>,
    masks: Option<Vec<Vec<f64>>>,
    word: BiTrace,
    u: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    scores: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub config: ModelConfig,
    pub tags: Vec<String>,
    pub scheme: TagScheme,
    pub chars: CharIndex,
    pub params: TaggerParams,
}

impl Tagger {
    pub fn new(config: ModelConfig, tags: Vec<String>, scheme: TagScheme, chars: CharIndex, rng: &mut Rng) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::usage("tag inventory is empty"));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::usage("dropout must lie in [0, 1)"));
        }
        let char_table = config.use_chars.then(|| {
            let mut t = crate::numeric::gaussian_init(rng, chars.len(), config.char_dim, (1.0 / config.char_dim as f64).sqrt())
                .expect("positive scale");
            t.row_mut(crate::corpus::PAD_CHAR).fill(0.0);
            t
        });
        let source = EncoderParams::new(
            config.use_chars.then_some((config.char_dim, config.char_hidden)),
            config.word_input(),
            config.word_hidden,
            config.tied,
            rng,
        );
        let head = CommonHead::new(2 * config.word_hidden, config.dense_dim, tags.len(), rng);
        Ok(Tagger {
            config,
            tags,
            scheme,
            chars,
            params: TaggerParams {
                chars: char_table,
                source,
                target: None,
                head,
            },
        })
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn has_target_encoder(&self) -> bool {
        self.params.target.is_some()
    }

    /// Installs a target encoder initialised as a copy of the source encoder.
    pub fn add_target_encoder(&mut self) {
        self.params.target = Some(self.params.source.clone());
    }

    pub fn encoder(&self, side: Side) -> Result<&EncoderParams> {
        match side {
            Side::Source => Ok(&self.params.source),
            Side::Target => self
                .params
                .target
                .as_ref()
                .ok_or_else(|| Error::usage("model has no target encoder")),
        }
    }

    /// Transition scores used for inference and training.
    pub fn transitions(&self) -> Matrix {
        let mut a = self.params.head.trans.clone();
        if self.config.constrained {
            a.axpy(1.0, &transition_mask(&self.tags, self.scheme)).expect("same shape");
        }
        a
    }

    pub fn prepare(&self, table: &EmbeddingTable, sentence: &TaggedSentence) -> Result<Prepared> {
        let tags = match &sentence.tags {
            Some(tags) => Some(
                tags.iter()
                    .map(|t| self.tag_index(t).ok_or_else(|| Error::InvalidTag(t.clone())))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(Prepared {
            chars: sentence.tokens.iter().map(|t| self.chars.encode(t)).collect(),
            words: sentence.tokens.iter().map(|t| table.resolve(t)).collect(),
            tags,
        })
    }

    fn check_table(&self, table: &EmbeddingTable) -> Result<()> {
        if table.dim() != self.config.emb_dim {
            return Err(Error::usage(format!(
                "embedding dimension {} does not match model dimension {}",
                table.dim(),
                self.config.emb_dim
            )));
        }
        Ok(())
    }

    fn char_trace(&self, enc: &EncoderParams, ids: &[usize]) -> Option<BiTrace> {
        let (Some(table), Some(lstm)) = (&self.params.chars, &enc.char_lstm) else {
            return None;
        };
        if ids.is_empty() {
            return None;
        }
        let rows: Vec<&[f64]> = ids.iter().map(|&c| table.row(c)).collect();
        Some(lstm.run(&rows))
    }

    fn char_features(&self, trace: &Option<BiTrace>) -> Vec<f64> {
        match trace {
            Some(t) => BiLstm::final_states(t),
            None if self.config.use_chars => vec![0.0; 2 * self.config.char_hidden],
            None => Vec::new(),
        }
    }

    /// Character encoding of one token: final forward and backward states.
    pub fn encode_token_chars(&self, side: Side, token: &str) -> Result<Vec<f64>> {
        let enc = self.encoder(side)?;
        Ok(self.char_features(&self.char_trace(enc, &self.chars.encode(token))))
    }

    fn inputs(&self, enc: &EncoderParams, table: &EmbeddingTable, p: &Prepared, rng: Option<&mut Rng>) -> (Vec<Option<BiTrace>>, Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
        let char_traces: Vec<Option<BiTrace>> = p.chars.iter().map(|ids| self.char_trace(enc, ids)).collect();
        let zero = vec![0.0; table.dim()];
        let mut xs: Vec<Vec<f64>> = char_traces
            .iter()
            .zip(&p.words)
            .map(|(tr, w)| {
                let mut x = self.char_features(tr);
                x.extend_from_slice(w.map_or(zero.as_slice(), |i| table.row(i)));
                x
            })
            .collect();
        let masks = match rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let masks: Vec<Vec<f64>> = xs
                    .iter()
                    .map(|x| x.iter().map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 }).collect())
                    .collect();
                for (x, m) in xs.iter_mut().zip(&masks) {
                    x.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
                }
                Some(masks)
            }
            _ => None,
        };
        (char_traces, xs, masks)
    }

    /// Token representations `[char encoding; word vector]`, one row per
    /// token. Passing an RNG selects training mode and applies dropout.
    pub fn embed_sentence(&self, side: Side, table: &EmbeddingTable, tokens: &[String], rng: Option<&mut Rng>) -> Result<Matrix> {
        self.check_table(table)?;
        let enc = self.encoder(side)?;
        let sentence = TaggedSentence::unlabeled(tokens.to_vec())?;
        let p = self.prepare(table, &sentence)?;
        let (_, xs, _) = self.inputs(enc, table, &p, rng);
        Matrix::from_rows(&xs)
    }

    /// Contextual states `[h_fwd; h_bwd]` for each row of `x`.
    pub fn word_context(&self, side: Side, x: &Matrix) -> Result<Matrix> {
        let enc = self.encoder(side)?;
        if x.rows() == 0 || x.cols() != enc.word_lstm.input_dim() {
            return Err(Error::usage(format!(
                "word encoder expects a non-empty matrix with {} columns",
                enc.word_lstm.input_dim()
            )));
        }
        let rows: Vec<&[f64]> = (0..x.rows()).map(|r| x.row(r)).collect();
        Matrix::from_rows(&BiLstm::states(&enc.word_lstm.run(&rows)))
    }

    fn head_forward(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = &self.params.head;
        let z: Vec<f64> = (0..h.dense_w.rows())
            .map(|r| (h.dense_b[(r, 0)] + crate::numeric::dot(h.dense_w.row(r), u)).tanh())
            .collect();
        let s = (0..h.v.rows()).map(|j| crate::numeric::dot(h.v.row(j), &z)).collect();
        (z, s)
    }

    /// `score(i, j) = V_j . tanh(D u_i + b)`.
    pub fn emission_scores(&self, u: &Matrix) -> Result<Matrix> {
        if u.cols() != self.params.head.dense_w.cols() {
            return Err(Error::usage("context width does not match the head"));
        }
        let mut out = Matrix::zeros(u.rows(), self.n_tags());
        for i in 0..u.rows() {
            out.row_mut(i).copy_from_slice(&self.head_forward(u.row(i)).1);
        }
        Ok(out)
    }

    fn forward(&self, side: Side, table: &EmbeddingTable, p: &Prepared, rng: Option<&mut Rng>) -> Result<Forward> {
        if p.is_empty() {
            return Err(Error::usage("cannot tag an empty sentence"));
        }
        let enc = self.encoder(side)?;
        let (char_traces, xs, masks) = self.inputs(enc, table, p, rng);
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let word = enc.word_lstm.run(&rows);
        let u = BiLstm::states(&word);
        let mut scores = Matrix::zeros(u.len(), self.n_tags());
        let mut z = Vec::with_capacity(u.len());
        for (i, ui) in u.iter().enumerate() {
            let (zi, si) = self.head_forward(ui);
            scores.row_mut(i).copy_from_slice(&si);
            z.push(zi);
        }
        Ok(Forward {
            char_traces,
            masks,
            word,
            u,
            z,
            scores,
        })
    }

    pub fn predict_indices(&self, side: Side, table: &EmbeddingTable, p: &Prepared) -> Result<Vec<usize>> {
        self.check_table(table)?;
        let f = self.forward(side, table, p, None)?;
        viterbi(&f.scores, &self.transitions())
    }

    /// Viterbi tags for a token sequence, in evaluation mode.
    pub fn predict(&self, side: Side, table: &EmbeddingTable, tokens: &[String]) -> Result<Vec<String>> {
        let p = self.prepare(table, &TaggedSentence::unlabeled(tokens.to_vec())?)?;
        Ok(self
            .predict_indices(side, table, &p)?
            .into_iter()
            .map(|i| self.tags[i].clone())
            .collect())
    }

    fn gold(p: &Prepared) -> Result<&[usize]> {
        p.tags
            .as_deref()
            .ok_or_else(|| Error::usage("training sentence has no tags"))
    }

    /// Mean CRF loss over a batch. With an RNG, dropout masks are drawn from
    /// it in sentence order, exactly as in [`Tagger::backward_pass`].
    pub fn batch_loss(&self, side: Side, table: &EmbeddingTable, batch: &[&Prepared], mut rng: Option<&mut Rng>) -> Result<f64> {
        self.check_table(table)?;
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let a = self.transitions();
        let mut total = 0.0;
        for p in batch {
            let f = self.forward(side, table, p, rng.as_deref_mut())?;
            total += crf_nll(&f.scores, &a, Self::gold(p)?)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean batch loss and its gradient with respect to every trainable tensor.
    pub fn backward_pass(&self, side: Side, table: &EmbeddingTable, batch: &[&Prepared], rng: Option<&mut Rng>) -> Result<(f64, TaggerParams)> {
        let mut grads = self.params.zeros_like();
        let loss = self.accumulate_gradient(side, table, batch, rng, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds the gradient of the mean batch loss into `grads`; returns the loss.
    pub fn accumulate_gradient(
        &self,
        side: Side,
        table: &EmbeddingTable,
        batch: &[&Prepared],
        mut rng: Option<&mut Rng>,
        grads: &mut TaggerParams,
    ) -> Result<f64> {
        self.check_table(table)?;
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let enc = self.encoder(side)?;
        let a = self.transitions();
        let scale = 1.0 / batch.len() as f64;
        let k = self.n_tags();
        let TaggerParams {
            chars: g_chars,
            source: g_src,
            target: g_tgt,
            head: g_head,
        } = grads;
        let g_enc = match side {
            Side::Source => g_src,
            Side::Target => g_tgt
                .as_mut()
                .ok_or_else(|| Error::usage("gradient container has no target encoder"))?,
        };
        let head = &self.params.head;
        let mut total = 0.0;

        for p in batch {
            let gold = Self::gold(p)?;
            let f = self.forward(side, table, p, rng.as_deref_mut())?;
            let mg = crf_marginals(&f.scores, &a)?;
            let nll = (mg.log_z - path_score(&f.scores, &a, gold)?).max(0.0);
            total += nll;

            let mut d_trans = mg.edge.clone();
            d_trans[(k, gold[0])] -= 1.0;
            d_trans[(gold[gold.len() - 1], k + 1)] -= 1.0;
            for w in gold.windows(2) {
                d_trans[(w[0], w[1])] -= 1.0;
            }
            g_head.trans.axpy(scale, &d_trans)?;

            let mut du = Vec::with_capacity(p.len());
            for (i, &y) in gold.iter().enumerate() {
                let ds: Vec<f64> = (0..k)
                    .map(|j| scale * (mg.node[(i, j)] - if j == y { 1.0 } else { 0.0 }))
                    .collect();
                let z = &f.z[i];
                let mut dz = vec![0.0; z.len()];
                for (j, &d) in ds.iter().enumerate() {
                    g_head.v.row_mut(j).iter_mut().zip(z).for_each(|(o, zv)| *o += d * zv);
                    dz.iter_mut().zip(head.v.row(j)).for_each(|(o, vv)| *o += d * vv);
                }
                let mut dui = vec![0.0; f.u[i].len()];
                for (r, (&dzr, &zr)) in dz.iter().zip(z).enumerate() {
                    let dpre = dzr * (1.0 - zr * zr);
                    if dpre == 0.0 {
                        continue;
                    }
                    g_head.dense_b[(r, 0)] += dpre;
                    g_head.dense_w.row_mut(r).iter_mut().zip(&f.u[i]).for_each(|(o, uv)| *o += dpre * uv);
                    dui.iter_mut().zip(head.dense_w.row(r)).for_each(|(o, w)| *o += dpre * w);
                }
                du.push(dui);
            }

            let mut dx = enc.word_lstm.backward_states(&f.word, &du, &mut g_enc.word_lstm);
            if let Some(masks) = &f.masks {
                for (d, m) in dx.iter_mut().zip(masks) {
                    d.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
                }
            }
            if let (Some(lstm), Some(g_lstm), Some(g_table)) = (&enc.char_lstm, g_enc.char_lstm.as_mut(), g_chars.as_mut()) {
                let width = 2 * lstm.hidden();
                for ((tr, ids), d) in f.char_traces.iter().zip(&p.chars).zip(&dx) {
                    let Some(tr) = tr else { continue };
                    let dchars = lstm.backward_final(tr, &d[..width], g_lstm);
                    for (&c, dc) in ids.iter().zip(&dchars) {
                        g_table.row_mut(c).iter_mut().zip(dc).for_each(|(o, v)| *o += v);
                    }
                }
            }
        }
        let loss = total * scale;
        if !loss.is_finite() || !grads_finite(g_head, g_enc, g_chars.as_ref()) {
            return Err(Error::Numerical("non-finite loss or gradient".into()));
        }
        Ok(loss)
    }

    /// Parameter counts per bi-recurrent level of one encoder:
    /// `(character level, word level)`.
    pub fn level_counts(&self, side: Side) -> Result<(usize, usize)> {
        let enc = self.encoder(side)?;
        Ok((enc.char_lstm.as_ref().map_or(0, BiLstm::n_params), enc.word_lstm.n_params()))
    }
}

fn grads_finite(head: &CommonHead, enc: &EncoderParams, chars: Option<&Matrix>) -> bool {
    let bi_ok = |b: &BiLstm| b.fwd.w.is_finite() && b.fwd.b.is_finite() && b.bwd.as_ref().is_none_or(|c| c.w.is_finite() && c.b.is_finite());
    head.dense_w.is_finite()
        && head.dense_b.is_finite()
        && head.v.is_finite()
        && head.trans.is_finite()
        && bi_ok(&enc.word_lstm)
        && enc.char_lstm.as_ref().is_none_or(bi_ok)
        && chars.is_none_or(Matrix::is_finite)
}
