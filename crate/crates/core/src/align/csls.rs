use crate::numeric::{dot, norm, Matrix};
use crate::{Error, Result};

/// Running mean of the `k` largest values seen.
#[derive(Clone)]
struct TopK {
    k: usize,
    vals: Vec<f64>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            vals: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if self.vals.len() == self.k && v <= self.vals[self.k - 1] {
            return;
        }
        let pos = self.vals.partition_point(|&x| x >= v);
        self.vals.insert(pos, v);
        self.vals.truncate(self.k);
    }

    fn mean(&self) -> f64 {
        self.vals.iter().sum::<f64>() / self.vals.len() as f64
    }
}

fn unit_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let n = norm(out.row(r));
        if n > 0.0 {
            out.row_mut(r).iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Cross-domain similarity local scaling between a query set and a key set:
/// `2 cos(q, key) - r_K(q) - r_Q(key)`, where `r_K(q)` is the mean cosine of
/// `q` to its `k` nearest keys and `r_Q(key)` the mean cosine of `key` to its
/// `k` nearest queries. `k` is clamped to the size of the set searched.
pub struct CslsIndex {
    queries: Matrix,
    keys: Matrix,
    r_query: Vec<f64>,
    r_key: Vec<f64>,
}

impl CslsIndex {
    pub fn new(queries: &Matrix, keys: &Matrix, k: usize) -> Result<Self> {
        if queries.rows() == 0 || keys.rows() == 0 {
            return Err(Error::usage("CSLS needs non-empty query and key sets"));
        }
        if queries.cols() != keys.cols() {
            return Err(Error::usage(format!(
                "CSLS dimension mismatch: {} vs {}",
                queries.cols(),
                keys.cols()
            )));
        }
        if k == 0 {
            return Err(Error::usage("CSLS neighbourhood size must be positive"));
        }
        let queries = unit_rows(queries);
        let keys = unit_rows(keys);
        let (n, m) = (queries.rows(), keys.rows());
        let mut near_keys = vec![TopK::new(k.min(m)); n];
        let mut near_queries = vec![TopK::new(k.min(n)); m];
        for i in 0..n {
            let q = queries.row(i);
            for j in 0..m {
                let c = dot(q, keys.row(j));
                near_keys[i].push(c);
                near_queries[j].push(c);
            }
        }
        Ok(CslsIndex {
            r_query: near_keys.iter().map(TopK::mean).collect(),
            r_key: near_queries.iter().map(TopK::mean).collect(),
            queries,
            keys,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.queries.rows()
    }

    pub fn n_keys(&self) -> usize {
        self.keys.rows()
    }

    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        2.0 * dot(self.queries.row(i), self.keys.row(j)) - self.r_query[i] - self.r_key[j]
    }

    /// Best key for every query and best query for every key, each with its
    /// score. Ties go to the lower index.
    pub fn best_matches(&self) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let (n, m) = (self.n_queries(), self.n_keys());
        let mut fwd = vec![(0usize, f64::NEG_INFINITY); n];
        let mut bwd = vec![(0usize, f64::NEG_INFINITY); m];
        for i in 0..n {
            for j in 0..m {
                let s = self.score(i, j);
                if s > fwd[i].1 {
                    fwd[i] = (j, s);
                }
                if s > bwd[j].1 {
                    bwd[j] = (i, s);
                }
            }
        }
        (fwd, bwd)
    }

    /// Best key for query `i`.
    pub fn top1(&self, i: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..self.n_keys() {
            let s = self.score(i, j);
            if s > best.1 {
                best = (j, s);
            }
        }
        best
    }
}

/// Full CSLS score matrix, queries by keys.
pub fn csls(queries: &Matrix, keys: &Matrix, k: usize) -> Result<Matrix> {
    let idx = CslsIndex::new(queries, keys, k)?;
    Ok(Matrix::from_fn(idx.n_queries(), idx.n_keys(), |i, j| idx.score(i, j)))
}

/// Fraction of `gold` pairs `(query row, key row)` whose query retrieves the
/// gold key as its CSLS top-1 among all keys.
pub fn csls_precision_at_1(queries: &Matrix, keys: &Matrix, k: usize, gold: &[(usize, usize)]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::usage("precision needs at least one gold pair"));
    }
    let idx = CslsIndex::new(queries, keys, k)?;
    let hits = gold.iter().filter(|&&(q, key)| idx.top1(q).0 == key).count();
    Ok(hits as f64 / gold.len() as f64)
}
