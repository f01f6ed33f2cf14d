//! Pretrained word vectors: `.vec` text I/O, OOV policy, normalization and
//! linear mapping between spaces.
//!
//! Vectors are frozen for the whole pipeline; only a mapper moves a table
//! from one space to another.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::align::LinearMapper;
use crate::corpus::WordIndex;
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Default cap on rows read from a `.vec` file.
pub const DEFAULT_LOAD_LIMIT: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    None,
    #[default]
    Unit,
    CenterThenUnit,
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormMode::None),
            "unit" => Ok(NormMode::Unit),
            "center_then_unit" | "center,unit" => Ok(NormMode::CenterThenUnit),
            _ => Err(Error::usage(format!("unknown normalization `{s}`"))),
        }
    }
}

/// Frequency-ordered vocabulary with one `d`-dimensional row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    language: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    zero: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table; later duplicates of a word are dropped.
    pub fn from_matrix(language: impl Into<String>, words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::usage(format!(
                "{} words but {} vectors",
                words.len(),
                vectors.rows()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Numerical("non-finite embedding values".into()));
        }
        let d = vectors.cols();
        let mut index = HashMap::with_capacity(words.len());
        let mut kept_words = Vec::with_capacity(words.len());
        let mut data = Vec::with_capacity(vectors.data().len());
        for (i, w) in words.into_iter().enumerate() {
            if index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), kept_words.len());
            kept_words.push(w);
            data.extend_from_slice(vectors.row(i));
        }
        let vectors = Matrix::new(kept_words.len(), d, data)?;
        Ok(EmbeddingTable {
            language: language.into(),
            words: kept_words,
            index,
            vectors,
            zero: vec![0.0; d],
        })
    }

    pub fn from_rows(language: impl Into<String>, words: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::from_matrix(language, words, m)
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn set_language(&mut self, language: impl Into<String>) {
        self.language = language.into();
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Row for `word`: exact match, else lowercase match.
    pub fn resolve(&self, word: &str) -> Option<usize> {
        self.index_of(word).or_else(|| {
            let lower = word.to_lowercase();
            if lower != word {
                self.index_of(&lower)
            } else {
                None
            }
        })
    }

    /// Exact match, else lowercase match, else the shared all-zero vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        match self.resolve(word) {
            Some(i) => self.vectors.row(i),
            None => &self.zero,
        }
    }

    /// First `n` rows (the most frequent words).
    pub fn head(&self, n: usize) -> EmbeddingTable {
        let n = n.min(self.len());
        let m = Matrix::new(n, self.dim(), self.vectors.data()[..n * self.dim()].to_vec())
            .expect("prefix of a valid matrix");
        EmbeddingTable::from_matrix(self.language.clone(), self.words[..n].to_vec(), m)
            .expect("prefix of a valid table")
    }

    /// Table over the words of `index` (unknown marker excluded), each row
    /// resolved through [`lookup`](Self::lookup).
    pub fn restrict(&self, index: &WordIndex) -> EmbeddingTable {
        let words: Vec<String> = index.words()[1..].to_vec();
        let mut m = Matrix::zeros(words.len(), self.dim());
        for (i, w) in words.iter().enumerate() {
            m.row_mut(i).copy_from_slice(self.lookup(w));
        }
        EmbeddingTable::from_matrix(self.language.clone(), words, m).expect("restricted table")
    }

    pub fn normalize(&self, mode: NormMode) -> EmbeddingTable {
        let mut out = self.clone();
        if mode == NormMode::None {
            return out;
        }
        let d = self.dim();
        if mode == NormMode::CenterThenUnit && !self.is_empty() {
            let mut mean = vec![0.0; d];
            for r in 0..self.len() {
                mean.iter_mut().zip(self.vectors.row(r)).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= self.len() as f64);
            for r in 0..self.len() {
                out.vectors.row_mut(r).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
            }
        }
        for r in 0..out.len() {
            let row = out.vectors.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }

    /// Every row `y` replaced by `W y`.
    pub fn apply_matrix(&self, w: &Matrix) -> Result<EmbeddingTable> {
        if w.rows() != self.dim() || w.cols() != self.dim() {
            return Err(Error::usage(format!(
                "mapper {:?} does not fit dimension {}",
                w.shape(),
                self.dim()
            )));
        }
        let vectors = self.vectors.matmul_t(w)?;
        let mut out = self.clone();
        out.vectors = vectors;
        Ok(out)
    }

    pub fn apply_mapper(&self, mapper: &LinearMapper) -> Result<EmbeddingTable> {
        self.apply_matrix(&mapper.w)
    }
}

/// Reads the fastText text format: a `n d` header, then `word v1 .. vd`
/// rows in frequency order.
pub fn load_vec_text<R: BufRead>(reader: R, language: &str, limit: Option<usize>) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let mut hf = header.split_whitespace();
    let (n, d) = match (hf.next(), hf.next(), hf.next()) {
        (Some(n), Some(d), None) => (
            n.parse::<usize>().map_err(|_| Error::parse(1, "bad row count"))?,
            d.parse::<usize>().map_err(|_| Error::parse(1, "bad dimension"))?,
        ),
        _ => return Err(Error::parse(1, "header must be `n d`")),
    };
    let take = limit.map_or(n, |l| l.min(n));
    let mut words = Vec::with_capacity(take);
    let mut data = Vec::with_capacity(take * d);
    for (i, line) in lines.enumerate() {
        if words.len() >= take {
            break;
        }
        let lineno = i + 2;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        let start = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad value `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, "non-finite value"));
            }
            data.push(v);
        }
        if data.len() - start != d {
            return Err(Error::parse(
                lineno,
                format!("expected {d} values, found {}", data.len() - start),
            ));
        }
        words.push(word.to_string());
    }
    let rows = words.len();
    EmbeddingTable::from_matrix(language, words, Matrix::new(rows, d, data)?)
}

pub fn write_vec_text<W: Write>(mut w: W, table: &EmbeddingTable) -> Result<()> {
    writeln!(w, "{} {}", table.len(), table.dim())?;
    for (i, word) in table.words().iter().enumerate() {
        write!(w, "{word}")?;
        for v in table.row(i) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
