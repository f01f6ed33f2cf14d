use super::Matrix;
use crate::{Error, Result};

/// L2 norm over the concatenation of all gradient tensors.
pub fn global_norm(grads: &[&Matrix]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Plain SGD with global-norm clipping: when the joint gradient norm exceeds
/// `clip`, every gradient is rescaled by `clip / norm` before
/// `p <- p - lr * g`. Returns the pre-clipping norm.
pub fn clipped_sgd_step(params: &mut [&mut Matrix], grads: &[&Matrix], lr: f64, clip: f64) -> Result<f64> {
    if params.len() != grads.len() {
        return Err(Error::usage(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if !(lr > 0.0) || !(clip > 0.0) {
        return Err(Error::usage("learning rate and clip must be positive"));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::usage(format!(
                "parameter {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::Numerical("non-finite gradient norm".into()));
    }
    let scale = if norm > clip { clip / norm } else { 1.0 };
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr * scale, g)?;
    }
    Ok(norm)
}
