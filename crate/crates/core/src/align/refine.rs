use super::{procrustes, CslsIndex, Direction, LinearMapper, SeedDictionary};
use crate::embeddings::EmbeddingTable;
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Per-iteration record of a refinement run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineReport {
    pub initial_criterion: f64,
    pub criteria: Vec<f64>,
    pub dictionary_sizes: Vec<usize>,
    /// 1-based iteration whose mapper was returned; `None` keeps the input.
    pub best_iteration: Option<usize>,
}

fn head_rows(m: &Matrix, n: usize) -> Matrix {
    let n = n.min(m.rows());
    Matrix::new(n, m.cols(), m.data()[..n * m.cols()].to_vec()).expect("prefix of a matrix")
}

fn check_dims(source: &EmbeddingTable, target: &EmbeddingTable, mapper: &LinearMapper) -> Result<()> {
    if source.dim() != target.dim() || mapper.dim() != source.dim() {
        return Err(Error::usage(format!(
            "dimension mismatch: source {}, target {}, mapper {}",
            source.dim(),
            target.dim(),
            mapper.dim()
        )));
    }
    Ok(())
}

/// `(anchor rows, mapped moving rows)` restricted to the `n` most frequent words.
fn common_heads(source: &EmbeddingTable, target: &EmbeddingTable, mapper: &LinearMapper, n: usize) -> Result<(Matrix, Matrix)> {
    check_dims(source, target, mapper)?;
    let (anchor, moving) = mapper.direction.sides(source, target);
    let a = head_rows(anchor.vectors(), n);
    let m = head_rows(moving.vectors(), n).matmul_t(&mapper.w)?;
    Ok((a, m))
}

/// Mutual CSLS nearest neighbours among the `top_n` most frequent words of
/// each side, as `(target row, source row)` pairs.
pub fn induce_dictionary(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    mapper: &LinearMapper,
    k: usize,
    top_n: usize,
) -> Result<SeedDictionary> {
    let (anchor, mapped) = common_heads(source, target, mapper, top_n)?;
    if anchor.rows() == 0 || mapped.rows() == 0 {
        return Err(Error::Alignment("empty embedding table".into()));
    }
    let idx = CslsIndex::new(&mapped, &anchor, k)?;
    let (fwd, bwd) = idx.best_matches();
    let mut pairs = Vec::new();
    for (i, &(j, _)) in fwd.iter().enumerate() {
        if bwd[j].0 == i {
            pairs.push(match mapper.direction {
                Direction::TargetToSource => (i, j),
                Direction::SourceToTarget => (j, i),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::Alignment("no mutual nearest neighbours".into()));
    }
    Ok(SeedDictionary { pairs })
}

/// Mean CSLS score of each of the `sample_n` most frequent mapped words with
/// its best match among the `sample_n` most frequent anchor words.
pub fn unsupervised_criterion(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    mapper: &LinearMapper,
    sample_n: usize,
    k: usize,
) -> Result<f64> {
    let (anchor, mapped) = common_heads(source, target, mapper, sample_n)?;
    let idx = CslsIndex::new(&mapped, &anchor, k)?;
    let (fwd, _) = idx.best_matches();
    let c = fwd.iter().map(|p| p.1).sum::<f64>() / fwd.len() as f64;
    if !c.is_finite() {
        return Err(Error::Numerical("non-finite alignment criterion".into()));
    }
    Ok(c)
}

fn dictionary_rows(source: &EmbeddingTable, target: &EmbeddingTable, dict: &SeedDictionary, direction: Direction) -> (Matrix, Matrix) {
    let d = source.dim();
    let mut x = Matrix::zeros(dict.size(), d);
    let mut y = Matrix::zeros(dict.size(), d);
    for (r, &(t, s)) in dict.pairs.iter().enumerate() {
        let (a, m) = match direction {
            Direction::TargetToSource => (source.row(s), target.row(t)),
            Direction::SourceToTarget => (target.row(t), source.row(s)),
        };
        x.row_mut(r).copy_from_slice(a);
        y.row_mut(r).copy_from_slice(m);
    }
    (x, y)
}

/// Alternates dictionary induction and Procrustes for `iterations` rounds and
/// returns the iterate with the best unsupervised criterion. Stops early once
/// the dictionary holds fewer pairs than dimensions.
pub fn refine(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    init: &LinearMapper,
    iterations: usize,
    k: usize,
    top_n: usize,
) -> Result<LinearMapper> {
    Ok(refine_with_report(source, target, init, iterations, k, top_n)?.0)
}

pub fn refine_with_report(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    init: &LinearMapper,
    iterations: usize,
    k: usize,
    top_n: usize,
) -> Result<(LinearMapper, RefineReport)> {
    check_dims(source, target, init)?;
    let mut report = RefineReport {
        initial_criterion: unsupervised_criterion(source, target, init, top_n, k)?,
        ..Default::default()
    };
    let mut current = init.clone();
    let mut best: Option<(f64, LinearMapper)> = None;
    for it in 1..=iterations {
        let dict = induce_dictionary(source, target, &current, k, top_n)?;
        report.dictionary_sizes.push(dict.size());
        if dict.size() < source.dim() {
            log::warn!(
                "refinement stopped at iteration {it}: dictionary has {} pairs for {} dimensions",
                dict.size(),
                source.dim()
            );
            break;
        }
        let (x, y) = dictionary_rows(source, target, &dict, init.direction);
        current = LinearMapper::new(procrustes(&x, &y)?, init.direction)?;
        let c = unsupervised_criterion(source, target, &current, top_n, k)?;
        log::debug!("refine {it}: {} pairs, criterion {c:.5}", dict.size());
        report.criteria.push(c);
        if best.as_ref().is_none_or(|(b, _)| c > *b) {
            best = Some((c, current.clone()));
            report.best_iteration = Some(it);
        }
    }
    Ok((best.map(|b| b.1).unwrap_or_else(|| init.clone()), report))
}
