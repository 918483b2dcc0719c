//! Minimal float64 building blocks with hand-written backward passes.
//!
//! Parameters of a model live in one flat `Vec<f64>` described by a
//! [`ParamLayout`]; gradients use a vector of the same layout so the
//! optimizer and the checkpoint code never need to know the model structure.

pub mod adam;
pub mod lstm;
pub mod params;
pub mod spiral_conv;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamId, ParamLayout};

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

/// `out += a @ b^T`, the shape used by every linear layer here.
pub fn gemm_nt_add(a: &ArrayView2<f64>, b: &ArrayView2<f64>, out: &mut ArrayViewMut2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, a, &b.t(), 1.0, out);
}

/// `out += a^T @ b`.
pub fn gemm_tn_add(a: &ArrayView2<f64>, b: &ArrayView2<f64>, out: &mut ArrayViewMut2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, &a.t(), b, 1.0, out);
}

/// `out += a @ b`.
pub fn gemm_nn_add(a: &ArrayView2<f64>, b: &ArrayView2<f64>, out: &mut ArrayViewMut2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, a, b, 1.0, out);
}

/// Affine map `x @ w^T + bias`.
pub fn linear(x: &ArrayView2<f64>, w: &ArrayView2<f64>, bias: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.nrows()));
    for mut row in out.rows_mut() {
        for (o, b) in row.iter_mut().zip(bias) {
            *o = *b;
        }
    }
    gemm_nt_add(x, w, &mut out.view_mut());
    out
}

/// Backward of [`linear`]: accumulates weight/bias gradients and returns the
/// input gradient.
pub fn linear_backward(
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
    dw: &mut ArrayViewMut2<f64>,
    db: &mut [f64],
) -> Array2<f64> {
    gemm_tn_add(dy, x, dw);
    for row in dy.rows() {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = Array2::zeros((x.nrows(), x.ncols()));
    gemm_nn_add(dy, w, &mut dx.view_mut());
    dx
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through its output.
pub fn elu_grad_from_output(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
