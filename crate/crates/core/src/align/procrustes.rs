use super::{Direction, LinearMapper};
use crate::numeric::{svd_square, Matrix};
use crate::{Error, Result};

/// Orthogonal `W` minimising `sum_i |W y_i - x_i|^2` over paired rows of
/// `x` (anchor) and `y` (moving).
///
/// With `x^T y = U S V^T` the minimiser is `U V^T`.
pub fn procrustes(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.shape() != y.shape() {
        return Err(Error::usage(format!(
            "procrustes needs paired rows: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::usage("procrustes needs at least one pair"));
    }
    let m = x.t_matmul(y)?;
    let svd = svd_square(&m)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let rank = svd.sigma.iter().filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE)).count();
    if rank < x.cols() {
        log::warn!("procrustes: cross-covariance has rank {rank} < {}; solution not unique", x.cols());
    }
    let w = svd.u.matmul_t(&svd.v)?;
    if !w.is_finite() {
        return Err(Error::Numerical("procrustes produced non-finite values".into()));
    }
    Ok(w)
}

/// Procrustes fit on dictionary rows, wrapped as a mapper.
pub fn procrustes_mapper(x: &Matrix, y: &Matrix, direction: Direction) -> Result<LinearMapper> {
    LinearMapper::new(procrustes(x, y)?, direction)
}
