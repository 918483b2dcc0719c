use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Compressed sparse row matrix of `f64`.
///
/// Serialises as `(rows, cols, [[row, col, value], ...])` triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripletForm", into = "TripletForm")]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TripletForm {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl TryFrom<TripletForm> for SparseMatrix {
    type Error = Error;

    fn try_from(t: TripletForm) -> Result<Self> {
        SparseMatrix::from_triplets(t.rows, t.cols, t.triplets)
    }
}

impl From<SparseMatrix> for TripletForm {
    fn from(m: SparseMatrix) -> Self {
        TripletForm {
            rows: m.rows,
            cols: m.cols,
            triplets: m.triplets(),
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from unordered triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::Shape(format!("triplet ({r}, {c}) outside {rows}x{cols}")));
        }
        if triplets.iter().any(|t| !t.2.is_finite()) {
            return Err(Error::Shape("non-finite sparse value".into()));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                let mut it = self.row(r);
                it.next() == Some((r, 1.0)) && it.next().is_none()
            })
    }

    /// `self @ x` for a dense `cols x C` matrix.
    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, x.ncols()));
        self.apply_into(x, &mut out.view_mut());
        out
    }

    pub fn apply_into(&self, x: &ArrayView2<f64>, out: &mut ArrayViewMut2<f64>) {
        debug_assert_eq!(x.nrows(), self.cols);
        out.fill(0.0);
        for r in 0..self.rows {
            let mut o = out.row_mut(r);
            for (c, v) in self.row(r) {
                o.scaled_add(v, &x.row(c));
            }
        }
    }

    /// Accumulates `self^T @ g` into `out` (`cols x C`), the adjoint of
    /// [`apply`](Self::apply).
    pub fn apply_transpose_add(&self, g: &ArrayView2<f64>, out: &mut ArrayViewMut2<f64>) {
        debug_assert_eq!(g.nrows(), self.rows);
        for r in 0..self.rows {
            let gr = g.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &gr);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_sum_duplicates_and_apply() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(1, 2, 0.5), (0, 0, 1.0), (1, 2, 0.25), (1, 0, 0.25)]).unwrap();
        assert_eq!(m.nnz(), 3);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let y = m.apply(&x.view());
        assert_eq!(y, array![[1.0, 2.0], [0.25 + 3.75, 0.5 + 4.5]]);
        let mut back = Array2::zeros((3, 2));
        m.apply_transpose_add(&array![[1.0, 0.0], [0.0, 1.0]].view(), &mut back.view_mut());
        assert_eq!(back, array![[1.0, 0.25], [0.0, 0.0], [0.0, 0.75]]);
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let m = SparseMatrix::from_triplets(3, 3, vec![(0, 1, 0.1), (2, 2, 1.0 / 3.0)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SparseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SparseMatrix>(r#"{"rows":1,"cols":1,"triplets":[[3,0,1.0]]}"#).is_err());
    }

    #[test]
    fn identity() {
        assert!(SparseMatrix::identity(4).is_identity());
        assert_eq!(SparseMatrix::identity(3).row_sums(), vec![1.0; 3]);
    }
}
