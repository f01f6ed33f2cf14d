//! Dense linear algebra, decomposition, optimizer step and randomness.
//!
//! Everything here is double precision and deterministic given its inputs.

mod matrix;
mod optim;
mod pca;
mod rng;
mod svd;

pub use matrix::Matrix;
pub(crate) use matrix::{dot, norm};
pub use optim::{clipped_sgd_step, global_norm};
pub use pca::{pca, Pca};
pub use rng::{gaussian_init, sample_uniform_int, Rng, RNG_ALGORITHM};
pub use svd::{svd_square, Svd};

use crate::{Error, Result};

/// `log(sum(exp(v)))` with max-subtraction.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::usage("log_sum_exp of an empty vector"));
    }
    Ok(lse(v))
}

/// Unchecked variant for hot loops; `v` must be non-empty.
#[inline]
pub(crate) fn lse(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
