use super::discriminator::Discriminator;
use super::{unsupervised_criterion, Direction, LinearMapper};
use crate::embeddings::EmbeddingTable;
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    /// Mapper updates.
    pub w_steps: usize,
    /// Discriminator updates before each mapper update.
    pub n_disc_steps: usize,
    pub batch_size: usize,
    pub disc_lr: f64,
    pub map_lr: f64,
    /// Orthogonalisation strength.
    pub beta: f64,
    pub disc_hidden: usize,
    pub disc_leak: f64,
    pub disc_dropout: f64,
    pub smoothing: f64,
    /// Only the most frequent words of each side are fed to the discriminator.
    pub disc_vocab: usize,
    /// Mapper steps between criterion evaluations; 0 returns the final mapper.
    pub eval_every: usize,
    pub criterion_n: usize,
    pub csls_k: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            w_steps: 30_000,
            n_disc_steps: 5,
            batch_size: 32,
            disc_lr: 0.1,
            map_lr: 0.1,
            beta: 0.01,
            disc_hidden: 512,
            disc_leak: 0.2,
            disc_dropout: 0.1,
            smoothing: 0.2,
            disc_vocab: 50_000,
            eval_every: 0,
            criterion_n: 10_000,
            csls_k: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdversarialReport {
    pub disc_loss: Vec<f64>,
    pub map_loss: Vec<f64>,
    /// `(mapper step, criterion)` at each evaluation.
    pub criteria: Vec<(usize, f64)>,
    pub best_step: Option<usize>,
}

/// `(1 + beta) W - beta (W W^T) W`, pulling `W` toward the orthogonal
/// manifold.
pub fn orthogonalize_step(w: &Matrix, beta: f64) -> Result<Matrix> {
    let wwt_w = w.matmul_t(w)?.matmul(w)?;
    let mut out = w.scaled(1.0 + beta);
    out.axpy(-beta, &wwt_w)?;
    Ok(out)
}

fn sample(table: &EmbeddingTable, cap: usize, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let cap = cap.min(table.len());
    (0..n).map(|_| table.row(rng.index(cap)).to_vec()).collect()
}

/// Trains `W`, initialised to the identity, against a discriminator that
/// tells mapped vectors from anchor vectors.
pub fn adversarial_train(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    direction: Direction,
    cfg: &AdversarialConfig,
    rng: &mut Rng,
) -> Result<(LinearMapper, AdversarialReport)> {
    if source.dim() != target.dim() {
        return Err(Error::usage(format!(
            "embedding dimensions differ: {} vs {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::usage("adversarial training needs non-empty tables"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    let d = source.dim();
    let (anchor, moving) = direction.sides(source, target);
    let mut mapper = LinearMapper::identity(d, direction);
    let mut disc = Discriminator::new(d, cfg.disc_hidden, rng);
    disc.leak = cfg.disc_leak;
    disc.input_dropout = cfg.disc_dropout;
    let s = cfg.smoothing;
    let inv_b = 1.0 / cfg.batch_size as f64;
    let mut report = AdversarialReport::default();
    let mut best: Option<(f64, Matrix)> = None;

    for step in 1..=cfg.w_steps {
        let mut dloss = 0.0;
        for _ in 0..cfg.n_disc_steps {
            let xa = sample(anchor, cfg.disc_vocab, cfg.batch_size, rng);
            let ym = sample(moving, cfg.disc_vocab, cfg.batch_size, rng);
            let mut g = disc.zero_grads();
            let mut loss = 0.0;
            for y in &ym {
                let z = mapper.w.matvec(y)?;
                loss += inv_b * disc.accumulate(&z, s, inv_b, Some(rng), &mut g);
            }
            for x in &xa {
                loss += inv_b * disc.accumulate(x, 1.0 - s, inv_b, Some(rng), &mut g);
            }
            disc.apply(&g, cfg.disc_lr);
            dloss += loss;
        }

        let ym = sample(moving, cfg.disc_vocab, cfg.batch_size, rng);
        let mut grad = Matrix::zeros(d, d);
        let mut dz = vec![0.0; d];
        let mut mloss = 0.0;
        for y in &ym {
            let z = mapper.w.matvec(y)?;
            let logit = disc.logit(&z);
            let scale = inv_b * (crate::numeric::sigmoid(logit) - (1.0 - s));
            dz.iter_mut().for_each(|v| *v = 0.0);
            disc.input_grad(&z, scale, &mut dz);
            for (r, &gz) in dz.iter().enumerate() {
                grad.row_mut(r).iter_mut().zip(y).for_each(|(o, yv)| *o += gz * yv);
            }
            mloss += inv_b * super::discriminator::bce(logit, 1.0 - s);
        }
        mapper.w.axpy(-cfg.map_lr, &grad)?;
        mapper.w = orthogonalize_step(&mapper.w, cfg.beta)?;

        if !(dloss.is_finite() && mloss.is_finite() && mapper.w.is_finite()) {
            return Err(Error::Numerical(format!("adversarial training diverged at step {step}")));
        }
        if cfg.n_disc_steps > 0 {
            report.disc_loss.push(dloss / cfg.n_disc_steps as f64);
        }
        report.map_loss.push(mloss);

        if cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.w_steps) {
            let c = unsupervised_criterion(source, target, &mapper, cfg.criterion_n, cfg.csls_k)?;
            log::info!("adversarial step {step}: criterion {c:.5}");
            report.criteria.push((step, c));
            if best.as_ref().is_none_or(|(b, _)| c > *b) {
                best = Some((c, mapper.w.clone()));
                report.best_step = Some(step);
            }
        }
    }
    if let Some((_, w)) = best {
        mapper.w = w;
    }
    Ok((mapper, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gaussian_init;

    #[test]
    fn orthogonal_matrices_are_fixed_points() {
        let mut rng = Rng::new(0);
        let g = gaussian_init(&mut rng, 5, 5, 1.0).unwrap();
        let s = crate::numeric::svd_square(&g).unwrap();
        let q = s.u.matmul_t(&s.v).unwrap();
        assert!(orthogonalize_step(&q, 0.01).unwrap().max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn update_contracts_toward_orthogonality() {
        let mut w = Matrix::from_diag(&[1.2, 0.9, 1.05]);
        let before = w.orthogonality_defect();
        for _ in 0..50 {
            w = orthogonalize_step(&w, 0.01).unwrap();
        }
        assert!(w.orthogonality_defect() < before);
    }

    #[test]
    fn zero_steps_returns_identity() {
        let mut rng = Rng::new(1);
        let e = EmbeddingTable::from_matrix(
            "x",
            (0..10).map(|i| format!("w{i}")).collect(),
            gaussian_init(&mut rng, 10, 4, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = AdversarialConfig {
            w_steps: 0,
            ..Default::default()
        };
        let (m, report) = adversarial_train(&e, &e, Direction::TargetToSource, &cfg, &mut rng).unwrap();
        assert_eq!(m.w, Matrix::identity(4));
        assert!(report.map_loss.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let mut rng = Rng::new(2);
        let src = EmbeddingTable::from_matrix(
            "s",
            (0..40).map(|i| format!("s{i}")).collect(),
            gaussian_init(&mut rng, 40, 4, 1.0).unwrap(),
        )
        .unwrap();
        let tgt = EmbeddingTable::from_matrix(
            "t",
            (0..40).map(|i| format!("t{i}")).collect(),
            gaussian_init(&mut rng, 40, 4, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = AdversarialConfig {
            w_steps: 200,
            disc_hidden: 32,
            ..Default::default()
        };
        let (a, _) = adversarial_train(&src, &tgt, Direction::TargetToSource, &cfg, &mut Rng::new(5)).unwrap();
        let (b, _) = adversarial_train(&src, &tgt, Direction::TargetToSource, &cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.w.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = Rng::new(3);
        let src = EmbeddingTable::from_matrix(
            "s",
            (0..10).map(|i| format!("s{i}")).collect(),
            gaussian_init(&mut rng, 10, 3, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = AdversarialConfig {
            w_steps: 50,
            disc_hidden: 8,
            map_lr: 1e6,
            beta: 5.0,
            ..Default::default()
        };
        let r = adversarial_train(&src, &src, Direction::TargetToSource, &cfg, &mut rng);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
