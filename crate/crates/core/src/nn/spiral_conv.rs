//! Spiral convolution and sparse resampling on batched vertex features.
//!
//! Features are `(B * N) x C` with row `b * N + v` for vertex `v` of sample
//! `b`.

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use super::{gemm_nn_add, gemm_tn_add, linear};
use crate::mesh::{SparseMatrix, SpiralIndexTable};

/// Concatenates the features along each vertex's spiral; padding entries
/// contribute zeros.
pub fn spiral_gather(x: &ArrayView2<f64>, batch: usize, spirals: &SpiralIndexTable) -> Array2<f64> {
    let n = spirals.vertex_count();
    let c = x.ncols();
    let len = spirals.spiral_length;
    debug_assert_eq!(x.nrows(), batch * n);
    let mut out = Array2::zeros((batch * n, len * c));
    for b in 0..batch {
        for v in 0..n {
            let mut row = out.row_mut(b * n + v);
            let row = row.as_slice_mut().expect("contiguous");
            for (k, &idx) in spirals.spiral(v).iter().enumerate() {
                if idx >= 0 {
                    let src = x.row(b * n + idx as usize);
                    for (d, s) in row[k * c..(k + 1) * c].iter_mut().zip(src) {
                        *d = *s;
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`spiral_gather`].
pub fn spiral_scatter_add(g: &ArrayView2<f64>, batch: usize, spirals: &SpiralIndexTable, dx: &mut ArrayViewMut2<f64>) {
    let n = spirals.vertex_count();
    let c = dx.ncols();
    for b in 0..batch {
        for v in 0..n {
            let row = g.row(b * n + v);
            for (k, &idx) in spirals.spiral(v).iter().enumerate() {
                if idx >= 0 {
                    let mut dst = dx.row_mut(b * n + idx as usize);
                    for j in 0..c {
                        dst[j] += row[k * c + j];
                    }
                }
            }
        }
    }
}

/// Returns the gathered input (needed for backward) and the layer output.
pub fn spiral_conv_forward(
    x: &ArrayView2<f64>,
    batch: usize,
    spirals: &SpiralIndexTable,
    w: &ArrayView2<f64>,
    bias: &[f64],
) -> (Array2<f64>, Array2<f64>) {
    let gathered = spiral_gather(x, batch, spirals);
    let y = linear(&gathered.view(), w, bias);
    (gathered, y)
}

pub fn spiral_conv_backward(
    gathered: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
    batch: usize,
    spirals: &SpiralIndexTable,
    w: &ArrayView2<f64>,
    dw: &mut ArrayViewMut2<f64>,
    db: &mut [f64],
    in_channels: usize,
) -> Array2<f64> {
    gemm_tn_add(dy, gathered, dw);
    for row in dy.rows() {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dg = Array2::zeros(gathered.dim());
    gemm_nn_add(dy, w, &mut dg.view_mut());
    let mut dx = Array2::zeros((gathered.nrows(), in_channels));
    spiral_scatter_add(&dg.view(), batch, spirals, &mut dx.view_mut());
    dx
}

/// Applies `m` (`N_out x N_in`) to every sample of the batch.
pub fn resample(m: &SparseMatrix, x: &ArrayView2<f64>, batch: usize) -> Array2<f64> {
    let (n_out, n_in) = (m.rows(), m.cols());
    let mut out = Array2::zeros((batch * n_out, x.ncols()));
    for b in 0..batch {
        let xs = x.slice(s![b * n_in..(b + 1) * n_in, ..]);
        let mut os = out.slice_mut(s![b * n_out..(b + 1) * n_out, ..]);
        m.apply_into(&xs, &mut os);
    }
    out
}

pub fn resample_backward(m: &SparseMatrix, dy: &ArrayView2<f64>, batch: usize) -> Array2<f64> {
    let (n_out, n_in) = (m.rows(), m.cols());
    let mut dx = Array2::zeros((batch * n_in, dy.ncols()));
    for b in 0..batch {
        let gs = dy.slice(s![b * n_out..(b + 1) * n_out, ..]);
        let mut ds = dx.slice_mut(s![b * n_in..(b + 1) * n_in, ..]);
        m.apply_transpose_add(&gs, &mut ds);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::compute_spirals;
    use crate::mesh::primitives::icosphere;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gather_pads_with_zeros() {
        let spirals = SpiralIndexTable {
            spiral_length: 3,
            dilation: 1,
            indices: vec![0, 1, -1, 1, 0, -1],
        };
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let g = spiral_gather(&x.view(), 1, &spirals);
        assert_eq!(g, array![[1.0, 2.0, 3.0, 4.0, 0.0, 0.0], [3.0, 4.0, 1.0, 2.0, 0.0, 0.0]]);
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences() {
        let mesh = icosphere(1, 1.0);
        let spirals = compute_spirals(mesh.vertex_count(), &mesh.faces, 7, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (batch, cin, cout) = (2, 3, 2);
        let n = mesh.vertex_count();
        let x = Array2::from_shape_fn((batch * n, cin), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((cout, 7 * cin), |_| rng.random_range(-1.0..1.0));
        let bias = vec![0.1, -0.3];
        let probe = Array2::from_shape_fn((batch * n, cout), |_| rng.random_range(-1.0..1.0));
        let f = |x: &Array2<f64>| (spiral_conv_forward(&x.view(), batch, &spirals, &w.view(), &bias).1 * &probe).sum();
        let (g, _) = spiral_conv_forward(&x.view(), batch, &spirals, &w.view(), &bias);
        let mut dw = Array2::zeros(w.dim());
        let mut db = vec![0.0; cout];
        let dx = spiral_conv_backward(&g.view(), &probe.view(), batch, &spirals, &w.view(), &mut dw.view_mut(), &mut db, cin);
        for idx in [(0, 0), (5, 2), (13, 1), (30, 0)] {
            let mut p = x.clone();
            p[idx] += 1e-6;
            let mut m = x.clone();
            m[idx] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - dx[idx]).abs() < 1e-6);
        }
        let bsum: Vec<f64> = (0..cout).map(|j| probe.column(j).sum()).collect();
        assert!((db[0] - bsum[0]).abs() < 1e-12 && (db[1] - bsum[1]).abs() < 1e-12);
    }

    #[test]
    fn resample_adjoint() {
        let m = SparseMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 0, 0.5), (1, 1, 0.5), (2, 1, 1.0)]).unwrap();
        let x = array![[1.0], [3.0], [0.0], [2.0]];
        let y = resample(&m, &x.view(), 2);
        assert_eq!(y, array![[1.0], [2.0], [3.0], [0.0], [1.0], [2.0]]);
        let g = array![[1.0], [1.0], [1.0], [2.0], [0.0], [0.0]];
        let dx = resample_backward(&m, &g.view(), 2);
        assert_eq!(dx, array![[1.5], [1.5], [2.0], [0.0]]);
    }
}
