use crate::numeric::{gaussian_init, sigmoid, Matrix, Rng};

/// `sigmoid(w2 . leaky(W1 z + b1) + b2)`: probability that `z` comes from
/// the anchor space.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub leak: f64,
    pub input_dropout: f64,
}

struct Trace {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    logit: f64,
}

/// Gradient accumulator with the discriminator's shape.
pub(crate) struct DiscGrads {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of logit `a` against soft target `t`.
#[inline]
pub(crate) fn bce(a: f64, t: f64) -> f64 {
    softplus(a) - t * a
}

impl Discriminator {
    pub fn new(dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w1 = gaussian_init(rng, hidden, dim, (1.0 / dim as f64).sqrt()).expect("positive scale");
        let w2 = (0..hidden).map(|_| rng.normal() * (1.0 / hidden as f64).sqrt()).collect();
        Discriminator {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
            leak: 0.2,
            input_dropout: 0.1,
        }
    }

    /// Constant-output discriminator, useful as a reference point.
    pub fn constant(dim: usize, hidden: usize, logit: f64) -> Self {
        Discriminator {
            w1: Matrix::zeros(hidden, dim),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: logit,
            leak: 0.2,
            input_dropout: 0.0,
        }
    }

    fn trace(&self, z: &[f64], dropout: Option<&mut Rng>) -> Trace {
        let input: Vec<f64> = match dropout {
            Some(rng) if self.input_dropout > 0.0 => {
                let keep = 1.0 - self.input_dropout;
                z.iter()
                    .map(|&v| if rng.bernoulli(keep) { v / keep } else { 0.0 })
                    .collect()
            }
            _ => z.to_vec(),
        };
        let pre: Vec<f64> = (0..self.b1.len())
            .map(|h| {
                self.b1[h] + self.w1.row(h).iter().zip(&input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let act: Vec<f64> = pre.iter().map(|&p| if p > 0.0 { p } else { self.leak * p }).collect();
        let logit = self.b2 + act.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>();
        Trace {
            input,
            pre,
            act,
            logit,
        }
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        self.trace(z, None).logit
    }

    /// Probability of the anchor class, kept inside the open unit interval.
    pub fn prob(&self, z: &[f64]) -> f64 {
        sigmoid(self.logit(z)).clamp(1e-15, 1.0 - 1e-15)
    }

    /// Gradient of the logit with respect to the input, with the
    /// discriminator held fixed (evaluation mode).
    pub(crate) fn input_grad(&self, z: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let t = self.trace(z, None);
        for h in 0..self.b1.len() {
            let slope = if t.pre[h] > 0.0 { 1.0 } else { self.leak };
            let g = scale * self.w2[h] * slope;
            if g != 0.0 {
                out.iter_mut().zip(self.w1.row(h)).for_each(|(o, w)| *o += g * w);
            }
        }
        t.logit
    }

    pub(crate) fn zero_grads(&self) -> DiscGrads {
        DiscGrads {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: 0.0,
        }
    }

    /// Adds `scale * d bce(logit(z), target) / d params` into `g`; returns the
    /// unscaled loss.
    pub(crate) fn accumulate(&self, z: &[f64], target: f64, scale: f64, rng: Option<&mut Rng>, g: &mut DiscGrads) -> f64 {
        let t = self.trace(z, rng);
        let dlogit = scale * (sigmoid(t.logit) - target);
        g.b2 += dlogit;
        for h in 0..self.b1.len() {
            g.w2[h] += dlogit * t.act[h];
            let slope = if t.pre[h] > 0.0 { 1.0 } else { self.leak };
            let dpre = dlogit * self.w2[h] * slope;
            if dpre != 0.0 {
                g.b1[h] += dpre;
                g.w1.row_mut(h).iter_mut().zip(&t.input).for_each(|(o, x)| *o += dpre * x);
            }
        }
        bce(t.logit, target)
    }

    pub(crate) fn apply(&mut self, g: &DiscGrads, lr: f64) {
        self.w1.axpy(-lr, &g.w1).expect("same shape");
        self.b1.iter_mut().zip(&g.b1).for_each(|(p, d)| *p -= lr * d);
        self.w2.iter_mut().zip(&g.w2).for_each(|(p, d)| *p -= lr * d);
        self.b2 -= lr * g.b2;
    }
}

fn mean_bce(d: &Discriminator, rows: impl Iterator<Item = Vec<f64>>, target: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for z in rows {
        sum += bce(d.logit(&z), target);
        n += 1;
    }
    sum / n.max(1) as f64
}

fn mapped_rows<'a>(w: &'a Matrix, moving: &'a [Vec<f64>]) -> impl Iterator<Item = Vec<f64>> + 'a {
    moving.iter().map(move |y| w.matvec(y).expect("mapper fits batch"))
}

/// Discriminator objective: mapped vectors labeled 0, anchor vectors 1, with
/// label smoothing `smoothing` moving both targets toward 1/2.
pub fn discriminator_loss(d: &Discriminator, w: &Matrix, anchor: &[Vec<f64>], moving: &[Vec<f64>], smoothing: f64) -> f64 {
    mean_bce(d, mapped_rows(w, moving), smoothing) + mean_bce(d, anchor.iter().cloned(), 1.0 - smoothing)
}

/// Mapper objective: the same terms with the labels flipped.
pub fn adversary_loss(d: &Discriminator, w: &Matrix, anchor: &[Vec<f64>], moving: &[Vec<f64>], smoothing: f64) -> f64 {
    mean_bce(d, mapped_rows(w, moving), 1.0 - smoothing) + mean_bce(d, anchor.iter().cloned(), smoothing)
}
