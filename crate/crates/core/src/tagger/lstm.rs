use crate::numeric::{gaussian_init, sigmoid, Matrix, Rng};

/// Gated recurrent cell. `w` is `4H x (I + H)` acting on `[x; h_prev]`, gate
/// blocks ordered input, forget, output, candidate; `b` is `4H x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Matrix,
    pub b: Matrix,
}

/// Everything the backward pass needs from one run over a sequence.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    input_dim: usize,
    hidden: usize,
    /// `[x_t; h_{t-1}]` per step.
    inputs: Vec<Vec<f64>>,
    /// Post-activation gates per step.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl LstmParams {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let fan_in = (input_dim + hidden) as f64;
        let w = gaussian_init(rng, 4 * hidden, input_dim + hidden, 1.0 / fan_in.sqrt()).expect("positive scale");
        let mut b = Matrix::zeros(4 * hidden, 1);
        for h in hidden..2 * hidden {
            b[(h, 0)] = 1.0;
        }
        LstmParams { w, b }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams {
            w: Matrix::zeros(self.w.rows(), self.w.cols()),
            b: Matrix::zeros(self.b.rows(), 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() - self.hidden()
    }

    pub fn n_params(&self) -> usize {
        self.w.data().len() + self.b.data().len()
    }

    /// Runs the cell over `xs` in the given order from zero state.
    pub fn run(&self, xs: &[&[f64]]) -> LstmTrace {
        let (hd, id) = (self.hidden(), self.input_dim());
        let mut trace = LstmTrace {
            input_dim: id,
            hidden: hd,
            inputs: Vec::with_capacity(xs.len()),
            gates: Vec::with_capacity(xs.len()),
            cells: Vec::with_capacity(xs.len()),
            outputs: Vec::with_capacity(xs.len()),
        };
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        for x in xs {
            debug_assert_eq!(x.len(), id);
            let mut v = Vec::with_capacity(id + hd);
            v.extend_from_slice(x);
            v.extend_from_slice(&h);
            let mut a: Vec<f64> = (0..4 * hd)
                .map(|r| self.b[(r, 0)] + self.w.row(r).iter().zip(&v).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            for (r, g) in a.iter_mut().enumerate() {
                *g = if r < 3 * hd { sigmoid(*g) } else { g.tanh() };
            }
            for k in 0..hd {
                c[k] = a[hd + k] * c[k] + a[k] * a[3 * hd + k];
                h[k] = a[2 * hd + k] * c[k].tanh();
            }
            trace.inputs.push(v);
            trace.gates.push(a);
            trace.cells.push(c.clone());
            trace.outputs.push(h.clone());
        }
        trace
    }

    /// Back-propagates `dh[t]` (gradient on each output) through time,
    /// accumulating into `grads` and returning the gradient on each input.
    pub fn backward(&self, trace: &LstmTrace, dh: &[Vec<f64>], grads: &mut LstmParams) -> Vec<Vec<f64>> {
        let (hd, id) = (trace.hidden, trace.input_dim);
        let n = trace.outputs.len();
        let mut dxs = vec![Vec::new(); n];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut da = vec![0.0; 4 * hd];
        for t in (0..n).rev() {
            let g = &trace.gates[t];
            let c = &trace.cells[t];
            for k in 0..hd {
                let (i, f, o, cand) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let c_prev = if t > 0 { trace.cells[t - 1][k] } else { 0.0 };
                let tc = c[k].tanh();
                let dhk = dh[t][k] + dh_next[k];
                let dc = dhk * o * (1.0 - tc * tc) + dc_next[k];
                da[k] = dc * cand * i * (1.0 - i);
                da[hd + k] = dc * c_prev * f * (1.0 - f);
                da[2 * hd + k] = dhk * tc * o * (1.0 - o);
                da[3 * hd + k] = dc * i * (1.0 - cand * cand);
                dc_next[k] = dc * f;
            }
            let v = &trace.inputs[t];
            let mut dv = vec![0.0; id + hd];
            for (r, &d) in da.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.b[(r, 0)] += d;
                let gw = grads.w.row_mut(r);
                gw.iter_mut().zip(v).for_each(|(o, x)| *o += d * x);
                dv.iter_mut().zip(self.w.row(r)).for_each(|(o, w)| *o += d * w);
            }
            dh_next.copy_from_slice(&dv[id..]);
            dv.truncate(id);
            dxs[t] = dv;
        }
        dxs
    }
}

/// Forward and backward cells; `bwd == None` ties the backward direction to
/// the forward parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: Option<LstmParams>,
}

pub struct BiTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
}

impl BiLstm {
    pub fn new(input_dim: usize, hidden: usize, tied: bool, rng: &mut Rng) -> Self {
        let fwd = LstmParams::new(input_dim, hidden, rng);
        let bwd = (!tied).then(|| LstmParams::new(input_dim, hidden, rng));
        BiLstm { fwd, bwd }
    }

    pub fn zeros_like(&self) -> Self {
        BiLstm {
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.as_ref().map(LstmParams::zeros_like),
        }
    }

    pub fn is_tied(&self) -> bool {
        self.bwd.is_none()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn n_params(&self) -> usize {
        self.fwd.n_params() + self.bwd.as_ref().map_or(0, LstmParams::n_params)
    }

    fn bwd_cell(&self) -> &LstmParams {
        self.bwd.as_ref().unwrap_or(&self.fwd)
    }

    pub fn run(&self, xs: &[&[f64]]) -> BiTrace {
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        BiTrace {
            fwd: self.fwd.run(xs),
            bwd: self.bwd_cell().run(&rev),
        }
    }

    /// Per-position `[h_fwd; h_bwd]`.
    pub fn states(trace: &BiTrace) -> Vec<Vec<f64>> {
        let n = trace.fwd.outputs.len();
        (0..n)
            .map(|t| {
                let mut u = trace.fwd.outputs[t].clone();
                u.extend_from_slice(&trace.bwd.outputs[n - 1 - t]);
                u
            })
            .collect()
    }

    /// `[final forward state; final backward state]`.
    pub fn final_states(trace: &BiTrace) -> Vec<f64> {
        let mut out = trace.fwd.outputs.last().cloned().unwrap_or_default();
        out.extend_from_slice(trace.bwd.outputs.last().map(Vec::as_slice).unwrap_or(&[]));
        out
    }

    /// Gradient through per-position states `du[t] = [dh_fwd; dh_bwd]`.
    pub fn backward_states(&self, trace: &BiTrace, du: &[Vec<f64>], grads: &mut BiLstm) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let n = du.len();
        let dfwd: Vec<Vec<f64>> = du.iter().map(|d| d[..h].to_vec()).collect();
        let dbwd: Vec<Vec<f64>> = (0..n).map(|t| du[n - 1 - t][h..].to_vec()).collect();
        self.backward_split(trace, &dfwd, &dbwd, grads)
    }

    /// Gradient through the final-state summary only.
    pub fn backward_final(&self, trace: &BiTrace, d: &[f64], grads: &mut BiLstm) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let n = trace.fwd.outputs.len();
        let mut dfwd = vec![vec![0.0; h]; n];
        let mut dbwd = vec![vec![0.0; h]; n];
        if n > 0 {
            dfwd[n - 1].copy_from_slice(&d[..h]);
            dbwd[n - 1].copy_from_slice(&d[h..]);
        }
        self.backward_split(trace, &dfwd, &dbwd, grads)
    }

    fn backward_split(&self, trace: &BiTrace, dfwd: &[Vec<f64>], dbwd: &[Vec<f64>], grads: &mut BiLstm) -> Vec<Vec<f64>> {
        let mut dx = self.fwd.backward(&trace.fwd, dfwd, &mut grads.fwd);
        let g_bwd = match grads.bwd.as_mut() {
            Some(g) => g,
            None => &mut grads.fwd,
        };
        let dx_rev = self.bwd_cell().backward(&trace.bwd, dbwd, g_bwd);
        let n = dx.len();
        for (t, d) in dx.iter_mut().enumerate() {
            d.iter_mut().zip(&dx_rev[n - 1 - t]).for_each(|(a, b)| *a += b);
        }
        dx
    }
}
