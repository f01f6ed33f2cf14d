use super::{svd_square, Matrix};
use crate::{Error, Result};

/// Principal component projection of a point cloud.
#[derive(Debug, Clone)]
pub struct Pca {
    /// Centred points expressed in the leading components, `n x k`.
    pub projection: Matrix,
    /// Principal axes as columns, `d x k`.
    pub axes: Matrix,
    /// Covariance eigenvalues, nonincreasing, all `d` of them.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

impl Pca {
    /// Total variance, the trace of the covariance.
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Mean squared distance between each centred point and its projection
    /// mapped back into the input space.
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64> {
        let centred = centre(x, &self.mean);
        let back = self.projection.matmul_t(&self.axes)?;
        let diff = centred.sub(&back)?;
        Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / x.rows() as f64)
    }
}

fn centre(x: &Matrix, mean: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] - mean[c])
}

/// Projects the rows of `x` onto their `k` leading principal components.
/// Covariance uses the `1/n` normalization.
pub fn pca(x: &Matrix, k: usize) -> Result<Pca> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::usage("pca of an empty matrix"));
    }
    if k == 0 || k > d {
        return Err(Error::usage(format!("cannot keep {k} of {d} components")));
    }
    let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| x[(r, c)]).sum::<f64>() / n as f64).collect();
    let xc = centre(x, &mean);
    let mut cov = xc.t_matmul(&xc)?;
    cov.scale(1.0 / n as f64);
    // symmetric positive semidefinite, so the SVD is the eigendecomposition
    let s = svd_square(&cov)?;
    let mut axes = Matrix::from_fn(d, k, |r, c| s.u[(r, c)]);
    // fix signs so the largest-magnitude loading of each axis is positive
    for c in 0..k {
        let lead = (0..d).max_by(|&a, &b| axes[(a, c)].abs().total_cmp(&axes[(b, c)].abs())).unwrap_or(0);
        if axes[(lead, c)] < 0.0 {
            for r in 0..d {
                axes[(r, c)] = -axes[(r, c)];
            }
        }
    }
    let projection = xc.matmul(&axes)?;
    Ok(Pca {
        projection,
        axes,
        eigenvalues: s.sigma,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gaussian_init, Rng};
    use proptest::prelude::*;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn two_dimensional_input_is_centred_and_rotated() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 0.0], [5.0, 7.0], [-1.0, 3.0]]).unwrap();
        let p = pca(&x, 2).unwrap();
        let c = centre(&x, &p.mean);
        // rotation preserves pairwise distances and norms
        for i in 0..4 {
            let a: f64 = c.row(i).iter().map(|v| v * v).sum();
            let b: f64 = p.projection.row(i).iter().map(|v| v * v).sum();
            assert!((a - b).abs() < 1e-10);
        }
        assert!(p.reconstruction_error(&x).unwrap() < 1e-20);
        assert!(p.axes.orthogonality_defect() < 1e-10);
    }

    /// Largest eigenvalue by power iteration with deflation.
    fn power_eigenvalues(cov: &Matrix, k: usize) -> Vec<f64> {
        let d = cov.rows();
        let mut a = cov.clone();
        let mut out = Vec::new();
        for _ in 0..k {
            let mut v = vec![1.0; d];
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let w = a.matvec(&v).unwrap();
                let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    break;
                }
                lambda = n;
                v = w.iter().map(|x| x / n).collect();
            }
            for r in 0..d {
                for c in 0..d {
                    a[(r, c)] -= lambda * v[r] * v[c];
                }
            }
            out.push(lambda);
        }
        out
    }

    #[test]
    fn reconstruction_error_matches_discarded_spectrum() {
        let mut rng = Rng::new(4);
        let mut x = gaussian_init(&mut rng, 60, 5, 1.0).unwrap();
        for r in 0..60 {
            for (c, s) in [4.0, 2.5, 1.0, 0.5, 0.2].iter().enumerate() {
                x[(r, c)] *= s;
            }
        }
        let p = pca(&x, 2).unwrap();
        let xc = centre(&x, &p.mean);
        let mut cov = xc.t_matmul(&xc).unwrap();
        cov.scale(1.0 / 60.0);
        let top = power_eigenvalues(&cov, 2);
        let total: f64 = (0..5).map(|c| cov[(c, c)]).sum();
        let err = p.reconstruction_error(&x).unwrap();
        assert!((err - (total - top[0] - top[1])).abs() < 1e-8, "{err} vs {}", total - top[0] - top[1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(pca(&Matrix::zeros(0, 3), 2).is_err());
        assert!(pca(&Matrix::zeros(4, 1), 2).is_err());
        assert!(pca(&Matrix::zeros(4, 3), 0).is_err());
    }

    proptest! {
        #[test]
        fn first_component_carries_most_variance(seed in 0u64..500, n in 3usize..30, d in 2usize..6) {
            let x = gaussian_init(&mut Rng::new(seed), n, d, 1.0).unwrap();
            let p = pca(&x, 2).unwrap();
            let v0 = variance(&p.projection.column(0));
            let v1 = variance(&p.projection.column(1));
            prop_assert!(v0 + 1e-10 >= v1);
            prop_assert!((v0 - p.eigenvalues[0]).abs() < 1e-8);
        }
    }
}
