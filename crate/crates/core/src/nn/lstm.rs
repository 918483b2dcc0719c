//! Single-direction LSTM layer over a batch of equal-length sequences.
//!
//! Inputs are stored time-major as `(T * B) x C` matrices, row `t * B + b`
//! holding step `t` of sequence `b`. Gates follow the i, f, g, o order.

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use super::{gemm_nn_add, gemm_nt_add, gemm_tn_add, linear, sigmoid};

/// Borrowed weights of one direction: `w_ih` is `4H x C`, `w_hh` is `4H x H`.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_ih: ArrayView2<'a, f64>,
    pub w_hh: ArrayView2<'a, f64>,
    pub bias: &'a [f64],
}

pub struct LstmGrads<'a> {
    pub w_ih: ArrayViewMut2<'a, f64>,
    pub w_hh: ArrayViewMut2<'a, f64>,
    pub bias: &'a mut [f64],
}

/// Activations kept for the backward pass.
pub struct LstmCache {
    pub steps: usize,
    pub batch: usize,
    pub reverse: bool,
    /// Post-activation gates, `(T * B) x 4H`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

impl LstmCache {
    fn prev_row(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.steps).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }
}

pub fn lstm_forward(x: &ArrayView2<f64>, steps: usize, batch: usize, w: LstmWeights, reverse: bool) -> LstmCache {
    let hidden = w.w_hh.ncols();
    debug_assert_eq!(x.nrows(), steps * batch);
    let mut gates = linear(x, &w.w_ih, w.bias);
    let mut c = Array2::zeros((steps * batch, hidden));
    let mut tanh_c = Array2::zeros((steps * batch, hidden));
    let mut h = Array2::<f64>::zeros((steps * batch, hidden));
    let mut h_prev = Array2::<f64>::zeros((batch, hidden));
    let mut c_prev = Array2::<f64>::zeros((batch, hidden));
    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let rows = t * batch..(t + 1) * batch;
        let mut g = gates.slice_mut(s![rows.clone(), ..]);
        gemm_nt_add(&h_prev.view(), &w.w_hh, &mut g);
        for b in 0..batch {
            let mut gr = g.row_mut(b);
            let r = t * batch + b;
            for j in 0..hidden {
                let i = sigmoid(gr[j]);
                let f = sigmoid(gr[hidden + j]);
                let gg = gr[2 * hidden + j].tanh();
                let o = sigmoid(gr[3 * hidden + j]);
                gr[j] = i;
                gr[hidden + j] = f;
                gr[2 * hidden + j] = gg;
                gr[3 * hidden + j] = o;
                let cv = f * c_prev[[b, j]] + i * gg;
                let tc = cv.tanh();
                c[[r, j]] = cv;
                tanh_c[[r, j]] = tc;
                h[[r, j]] = o * tc;
            }
        }
        h_prev.assign(&h.slice(s![rows.clone(), ..]));
        c_prev.assign(&c.slice(s![rows, ..]));
    }
    LstmCache {
        steps,
        batch,
        reverse,
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Backpropagates `dh` (gradient w.r.t. every hidden output) through the
/// layer, accumulating weight gradients and returning the input gradient.
pub fn lstm_backward(
    x: &ArrayView2<f64>,
    cache: &LstmCache,
    dh: &ArrayView2<f64>,
    w: LstmWeights,
    grads: LstmGrads,
) -> Array2<f64> {
    let LstmCache { steps, batch, .. } = *cache;
    let hidden = w.w_hh.ncols();
    let mut dgates = Array2::<f64>::zeros((steps * batch, 4 * hidden));
    let mut h_prev_all = Array2::<f64>::zeros((steps * batch, hidden));
    let mut dh_next = Array2::<f64>::zeros((batch, hidden));
    let mut dc_next = Array2::<f64>::zeros((batch, hidden));
    for step in (0..steps).rev() {
        let t = if cache.reverse { steps - 1 - step } else { step };
        let prev = cache.prev_row(t);
        for b in 0..batch {
            let r = t * batch + b;
            let gr = cache.gates.row(r);
            let mut dg = dgates.row_mut(r);
            for j in 0..hidden {
                let (i, f, g, o) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
                let tc = cache.tanh_c[[r, j]];
                let c_prev = prev.map_or(0.0, |p| cache.c[[p * batch + b, j]]);
                let dhv = dh[[r, j]] + dh_next[[b, j]];
                let dc = dc_next[[b, j]] + dhv * o * (1.0 - tc * tc);
                dg[j] = dc * g * i * (1.0 - i);
                dg[hidden + j] = dc * c_prev * f * (1.0 - f);
                dg[2 * hidden + j] = dc * i * (1.0 - g * g);
                dg[3 * hidden + j] = dhv * tc * o * (1.0 - o);
                dc_next[[b, j]] = dc * f;
            }
            if let Some(p) = prev {
                h_prev_all.row_mut(r).assign(&cache.h.row(p * batch + b));
            }
        }
        dh_next.fill(0.0);
        let rows = t * batch..(t + 1) * batch;
        gemm_nn_add(&dgates.slice(s![rows, ..]), &w.w_hh, &mut dh_next.view_mut());
    }
    let LstmGrads {
        w_ih: mut dw_ih,
        w_hh: mut dw_hh,
        bias: dbias,
    } = grads;
    gemm_tn_add(&dgates.view(), &h_prev_all.view(), &mut dw_hh);
    gemm_tn_add(&dgates.view(), x, &mut dw_ih);
    for row in dgates.rows() {
        for (d, g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = Array2::zeros((x.nrows(), x.ncols()));
    gemm_nn_add(&dgates.view(), &w.w_ih, &mut dx.view_mut());
    dx
}
