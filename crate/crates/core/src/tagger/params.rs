use super::lstm::BiLstm;
use crate::numeric::{gaussian_init, Matrix, Rng};
use crate::{Error, Result};

/// One language's recurrent stack. The character encoder is absent for
/// word-only variants.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub char_lstm: Option<BiLstm>,
    pub word_lstm: BiLstm,
}

/// Point-wise dense layer, per-tag scoring matrix and CRF transitions,
/// shared by every encoder of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonHead {
    pub dense_w: Matrix,
    pub dense_b: Matrix,
    pub v: Matrix,
    pub trans: Matrix,
}

/// All trainable tensors. The character table and the head exist once and
/// serve both encoders. The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerParams {
    pub chars: Option<Matrix>,
    pub source: EncoderParams,
    pub target: Option<EncoderParams>,
    pub head: CommonHead,
}

fn push_bi<'a>(out: &mut Vec<(String, &'a Matrix)>, prefix: &str, bi: &'a BiLstm) {
    out.push((format!("{prefix}.fwd.w"), &bi.fwd.w));
    out.push((format!("{prefix}.fwd.b"), &bi.fwd.b));
    if let Some(b) = &bi.bwd {
        out.push((format!("{prefix}.bwd.w"), &b.w));
        out.push((format!("{prefix}.bwd.b"), &b.b));
    }
}

fn push_bi_mut<'a>(out: &mut Vec<(String, &'a mut Matrix)>, prefix: &str, bi: &'a mut BiLstm) {
    out.push((format!("{prefix}.fwd.w"), &mut bi.fwd.w));
    out.push((format!("{prefix}.fwd.b"), &mut bi.fwd.b));
    if let Some(b) = &mut bi.bwd {
        out.push((format!("{prefix}.bwd.w"), &mut b.w));
        out.push((format!("{prefix}.bwd.b"), &mut b.b));
    }
}

impl EncoderParams {
    pub fn new(char_input: Option<(usize, usize)>, word_input: usize, word_hidden: usize, tied: bool, rng: &mut Rng) -> Self {
        let char_lstm = char_input.map(|(dim, hidden)| BiLstm::new(dim, hidden, tied, rng));
        let word_lstm = BiLstm::new(word_input, word_hidden, tied, rng);
        EncoderParams { char_lstm, word_lstm }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            char_lstm: self.char_lstm.as_ref().map(BiLstm::zeros_like),
            word_lstm: self.word_lstm.zeros_like(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.char_lstm.as_ref().map_or(0, BiLstm::n_params) + self.word_lstm.n_params()
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        if let Some(c) = &self.char_lstm {
            push_bi(out, &format!("{prefix}.char"), c);
        }
        push_bi(out, &format!("{prefix}.word"), &self.word_lstm);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        if let Some(c) = &mut self.char_lstm {
            push_bi_mut(out, &format!("{prefix}.char"), c);
        }
        push_bi_mut(out, &format!("{prefix}.word"), &mut self.word_lstm);
    }
}

impl CommonHead {
    pub fn new(context_dim: usize, dense_dim: usize, n_tags: usize, rng: &mut Rng) -> Self {
        CommonHead {
            dense_w: gaussian_init(rng, dense_dim, context_dim, 1.0 / (context_dim as f64).sqrt()).expect("positive scale"),
            dense_b: Matrix::zeros(dense_dim, 1),
            v: gaussian_init(rng, n_tags, dense_dim, 1.0 / (dense_dim as f64).sqrt()).expect("positive scale"),
            trans: Matrix::zeros(n_tags + 2, n_tags + 2),
        }
    }

    pub fn zeros_like(&self) -> Self {
        CommonHead {
            dense_w: Matrix::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: Matrix::zeros(self.dense_b.rows(), 1),
            v: Matrix::zeros(self.v.rows(), self.v.cols()),
            trans: Matrix::zeros(self.trans.rows(), self.trans.cols()),
        }
    }

    pub fn n_params(&self) -> usize {
        [&self.dense_w, &self.dense_b, &self.v, &self.trans]
            .iter()
            .map(|m| m.data().len())
            .sum()
    }
}

/// Trainable parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Recurrent cells plus the common head.
    pub recurrent_and_head: usize,
    /// Additionally including the character table.
    pub total: usize,
}

impl TaggerParams {
    pub fn zeros_like(&self) -> Self {
        TaggerParams {
            chars: self.chars.as_ref().map(|c| Matrix::zeros(c.rows(), c.cols())),
            source: self.source.zeros_like(),
            target: self.target.as_ref().map(EncoderParams::zeros_like),
            head: self.head.zeros_like(),
        }
    }

    pub fn count(&self) -> ParamCount {
        let recurrent_and_head =
            self.source.n_params() + self.target.as_ref().map_or(0, EncoderParams::n_params) + self.head.n_params();
        ParamCount {
            recurrent_and_head,
            total: recurrent_and_head + self.chars.as_ref().map_or(0, |c| c.data().len()),
        }
    }

    /// Every tensor under a stable name. Tied backward cells do not appear.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(c) = &self.chars {
            out.push(("chars".to_string(), c));
        }
        self.source.tensors("src", &mut out);
        if let Some(t) = &self.target {
            t.tensors("tgt", &mut out);
        }
        out.push(("head.dense.w".into(), &self.head.dense_w));
        out.push(("head.dense.b".into(), &self.head.dense_b));
        out.push(("head.v".into(), &self.head.v));
        out.push(("head.trans".into(), &self.head.trans));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        if let Some(c) = &mut self.chars {
            out.push(("chars".to_string(), c));
        }
        self.source.tensors_mut("src", &mut out);
        if let Some(t) = &mut self.target {
            t.tensors_mut("tgt", &mut out);
        }
        out.push(("head.dense.w".into(), &mut self.head.dense_w));
        out.push(("head.dense.b".into(), &mut self.head.dense_b));
        out.push(("head.v".into(), &mut self.head.v));
        out.push(("head.trans".into(), &mut self.head.trans));
        out
    }

    /// Copies tensors by name into a structure of the same layout.
    pub fn load_named(&mut self, tensors: &[(String, Matrix)]) -> Result<()> {
        let mut slots = self.named_tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Artifact(format!(
                "expected {} tensors, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (name, slot) in slots.iter_mut() {
            let src = tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m)
                .ok_or_else(|| Error::Artifact(format!("missing tensor `{name}`")))?;
            if src.shape() != slot.shape() {
                return Err(Error::Artifact(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    slot.shape()
                )));
            }
            **slot = src.clone();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }
}
