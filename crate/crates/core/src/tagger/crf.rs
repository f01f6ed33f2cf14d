//! Linear-chain CRF over `K` tags with begin/end states.
//!
//! Transition matrices are `(K + 2) x (K + 2)`; index `K` is the begin
//! state and `K + 1` the end state. A path `y_1..y_m` scores
//! `A[BOS, y_1] + sum_i s_i(y_i) + sum_i A[y_i, y_{i+1}] + A[y_m, EOS]`.

use crate::corpus::{Label, TagScheme};
use crate::numeric::{lse, Matrix};
use crate::{Error, Result};

/// Score added to disallowed transitions when masking is enabled.
pub const MASK_SCORE: f64 = -1e4;

fn check(scores: &Matrix, trans: &Matrix) -> Result<(usize, usize)> {
    let (m, k) = scores.shape();
    if m == 0 || k == 0 {
        return Err(Error::usage("CRF needs at least one position and one tag"));
    }
    if trans.shape() != (k + 2, k + 2) {
        return Err(Error::usage(format!(
            "transition matrix is {:?}, expected {}x{}",
            trans.shape(),
            k + 2,
            k + 2
        )));
    }
    Ok((m, k))
}

fn forward(scores: &Matrix, trans: &Matrix, m: usize, k: usize) -> Vec<Vec<f64>> {
    let bos = k;
    let mut alpha = Vec::with_capacity(m);
    alpha.push((0..k).map(|j| trans[(bos, j)] + scores[(0, j)]).collect::<Vec<_>>());
    let mut buf = vec![0.0; k];
    for i in 1..m {
        let prev: &Vec<f64> = &alpha[i - 1];
        let row: Vec<f64> = (0..k)
            .map(|j| {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = prev[p] + trans[(p, j)];
                }
                scores[(i, j)] + lse(&buf)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward(scores: &Matrix, trans: &Matrix, m: usize, k: usize) -> Vec<Vec<f64>> {
    let eos = k + 1;
    let mut beta = vec![vec![0.0; k]; m];
    beta[m - 1] = (0..k).map(|j| trans[(j, eos)]).collect();
    let mut buf = vec![0.0; k];
    for i in (0..m - 1).rev() {
        for j in 0..k {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = trans[(j, n)] + scores[(i + 1, n)] + beta[i + 1][n];
            }
            beta[i][j] = lse(&buf);
        }
    }
    beta
}

fn log_z_from(alpha: &[Vec<f64>], trans: &Matrix, k: usize) -> f64 {
    let last = alpha.last().expect("non-empty");
    let v: Vec<f64> = (0..k).map(|j| last[j] + trans[(j, k + 1)]).collect();
    lse(&v)
}

/// `log` of the sum over all `K^m` paths of `exp(path score)`.
pub fn crf_log_partition(scores: &Matrix, trans: &Matrix) -> Result<f64> {
    let (m, k) = check(scores, trans)?;
    Ok(log_z_from(&forward(scores, trans, m, k), trans, k))
}

/// Posterior quantities from forward-backward.
#[derive(Debug, Clone)]
pub struct CrfMarginals {
    pub log_z: f64,
    /// `p(y_i = j)`, `m x K`.
    pub node: Matrix,
    /// Expected transition counts, `(K + 2) x (K + 2)`.
    pub edge: Matrix,
}

pub fn crf_marginals(scores: &Matrix, trans: &Matrix) -> Result<CrfMarginals> {
    let (m, k) = check(scores, trans)?;
    let alpha = forward(scores, trans, m, k);
    let beta = backward(scores, trans, m, k);
    let log_z = log_z_from(&alpha, trans, k);
    let node = Matrix::from_fn(m, k, |i, j| (alpha[i][j] + beta[i][j] - log_z).exp());
    let mut edge = Matrix::zeros(k + 2, k + 2);
    for j in 0..k {
        edge[(k, j)] = node[(0, j)];
        edge[(j, k + 1)] = node[(m - 1, j)];
    }
    for i in 0..m.saturating_sub(1) {
        for p in 0..k {
            for n in 0..k {
                edge[(p, n)] += (alpha[i][p] + trans[(p, n)] + scores[(i + 1, n)] + beta[i + 1][n] - log_z).exp();
            }
        }
    }
    Ok(CrfMarginals { log_z, node, edge })
}

/// Unnormalised log score of one path.
pub fn path_score(scores: &Matrix, trans: &Matrix, path: &[usize]) -> Result<f64> {
    let (m, k) = check(scores, trans)?;
    if path.len() != m {
        return Err(Error::usage(format!("path has {} labels for {m} positions", path.len())));
    }
    if let Some(&bad) = path.iter().find(|&&y| y >= k) {
        return Err(Error::usage(format!("label index {bad} out of range for {k} tags")));
    }
    let mut s = trans[(k, path[0])] + trans[(path[m - 1], k + 1)];
    for (i, &y) in path.iter().enumerate() {
        s += scores[(i, y)];
        if i > 0 {
            s += trans[(path[i - 1], y)];
        }
    }
    Ok(s)
}

/// `-log p(path | scores)`.
pub fn crf_nll(scores: &Matrix, trans: &Matrix, path: &[usize]) -> Result<f64> {
    let s = path_score(scores, trans, path)?;
    Ok((crf_log_partition(scores, trans)? - s).max(0.0))
}

/// Highest-scoring path. Among equal scores the lower tag index wins, decided
/// position by position from the left.
pub fn viterbi(scores: &Matrix, trans: &Matrix) -> Result<Vec<usize>> {
    let (m, k) = check(scores, trans)?;
    let mut delta: Vec<f64> = (0..k).map(|j| trans[(k, j)] + scores[(0, j)]).collect();
    let mut back = vec![vec![0usize; k]; m];
    for i in 1..m {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = (0, f64::NEG_INFINITY);
            for (p, &d) in delta.iter().enumerate() {
                let v = d + trans[(p, j)];
                if v > best.1 {
                    best = (p, v);
                }
            }
            back[i][j] = best.0;
            next[j] = best.1 + scores[(i, j)];
        }
        delta = next;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &d) in delta.iter().enumerate() {
        let v = d + trans[(j, k + 1)];
        if v > best.1 {
            best = (j, v);
        }
    }
    let mut path = vec![best.0; m];
    for i in (1..m).rev() {
        path[i - 1] = back[i][path[i]];
    }
    Ok(path)
}

/// Additive mask forbidding transitions that no well-formed sequence of the
/// given scheme contains. Unparseable tags are left unconstrained.
pub fn transition_mask(tags: &[String], scheme: TagScheme) -> Matrix {
    let k = tags.len();
    let parsed: Vec<Option<(char, Option<String>)>> = tags
        .iter()
        .map(|t| Label::parse(t).ok().map(|l| (l.prefix(), l.kind().map(str::to_string))))
        .collect();
    let ends_chunk = |p: char| matches!(p, 'O' | 'E' | 'S');
    let mut mask = Matrix::zeros(k + 2, k + 2);
    for to in 0..k {
        let Some((pt, kt)) = &parsed[to] else { continue };
        let from_bos = match scheme {
            TagScheme::Iob1 => *pt != 'B',
            TagScheme::Iob2 => *pt != 'I',
            TagScheme::Iobes => !matches!(pt, 'I' | 'E'),
        };
        if !from_bos {
            mask[(k, to)] = MASK_SCORE;
        }
        for from in 0..k {
            let Some((pf, kf)) = &parsed[from] else { continue };
            let same = kf == kt;
            let ok = match (scheme, pt) {
                (TagScheme::Iob1, 'B') => same && *pf != 'O',
                (TagScheme::Iob2, 'I') => same && matches!(pf, 'B' | 'I'),
                (TagScheme::Iobes, 'I' | 'E') => same && matches!(pf, 'B' | 'I'),
                (TagScheme::Iobes, _) => ends_chunk(*pf),
                _ => true,
            };
            if !ok {
                mask[(from, to)] = MASK_SCORE;
            }
        }
    }
    if scheme == TagScheme::Iobes {
        for (from, p) in parsed.iter().enumerate() {
            if matches!(p, Some((pf, _)) if !ends_chunk(*pf)) {
                mask[(from, k + 1)] = MASK_SCORE;
            }
        }
    }
    mask
}
