use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::decimate::decimate;
use super::{Mesh, SparseMatrix};
use crate::{Error, Result};

/// Chain of decimated resolutions with sparse resampling operators.
///
/// Level 0 is the full mesh. `down[k]` is `N_{k+1} x N_k` and selects the
/// surviving vertices; `up[k]` is `N_k x N_{k+1}` and maps each fine vertex to
/// barycentric weights of its closest coarse triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingHierarchy {
    pub level_sizes: Vec<usize>,
    pub level_faces: Vec<Vec<[usize; 3]>>,
    pub down: Vec<SparseMatrix>,
    pub up: Vec<SparseMatrix>,
}

impl SamplingHierarchy {
    /// Number of resampling steps (levels beyond the full mesh).
    pub fn depth(&self) -> usize {
        self.down.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.depth();
        if self.up.len() != d || self.level_sizes.len() != d + 1 || self.level_faces.len() != d + 1 {
            return Err(Error::InvalidTopology("hierarchy level lists disagree in length".into()));
        }
        for k in 0..d {
            let (fine, coarse) = (self.level_sizes[k], self.level_sizes[k + 1]);
            if coarse > fine {
                return Err(Error::InvalidTopology(format!("level {} grows", k + 1)));
            }
            if (self.down[k].rows(), self.down[k].cols()) != (coarse, fine)
                || (self.up[k].rows(), self.up[k].cols()) != (fine, coarse)
            {
                return Err(Error::InvalidTopology(format!("level {k} matrix shapes do not chain")));
            }
            if self.up[k].row_sums().iter().any(|s| (s - 1.0).abs() > 1e-6)
                || self.up[k].triplets().iter().any(|t| t.2 < 0.0)
            {
                return Err(Error::InvalidTopology(format!("level {k} upsampling rows are not convex")));
            }
        }
        for (k, faces) in self.level_faces.iter().enumerate() {
            if faces.iter().any(|f| f.iter().any(|&i| i >= self.level_sizes[k])) {
                return Err(Error::InvalidTopology(format!("level {k} face out of range")));
            }
        }
        Ok(())
    }

    /// Positions of every level obtained by repeatedly down-sampling `fine`.
    pub fn level_positions(&self, fine: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut out = vec![fine.clone()];
        for d in &self.down {
            let next = d.apply(&out.last().unwrap().view());
            out.push(next);
        }
        out
    }
}

/// Builds the hierarchy by quadric decimation of `reference`, each level
/// keeping `ceil(N_k * factor_k)` vertices.
pub fn build_sampling_hierarchy(reference: &Mesh, factors: &[f64]) -> Result<SamplingHierarchy> {
    if factors.is_empty() {
        return Err(Error::Config("at least one reduction factor is required".into()));
    }
    if let Some(f) = factors.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Config(format!("reduction factor {f} outside (0, 1]")));
    }
    let mut positions = reference.vertices.clone();
    let mut faces = reference.faces.clone();
    let mut h = SamplingHierarchy {
        level_sizes: vec![positions.len()],
        level_faces: vec![faces.clone()],
        down: Vec::new(),
        up: Vec::new(),
    };
    for &f in factors {
        let n = positions.len();
        let target = (n as f64 * f).ceil() as usize;
        let (down, up, coarse_pos, coarse_faces) = if target >= n {
            (SparseMatrix::identity(n), SparseMatrix::identity(n), positions.clone(), faces.clone())
        } else {
            let d = decimate(&positions, &faces, target)?;
            let coarse_pos: Vec<[f64; 3]> = d.kept.iter().map(|&i| positions[i]).collect();
            let down = SparseMatrix::from_triplets(
                d.kept.len(),
                n,
                d.kept.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect(),
            )?;
            let up = upsampling_matrix(&positions, &d.kept, &coarse_pos, &d.faces)?;
            (down, up, coarse_pos, d.faces)
        };
        h.down.push(down);
        h.up.push(up);
        h.level_sizes.push(coarse_pos.len());
        h.level_faces.push(coarse_faces.clone());
        positions = coarse_pos;
        faces = coarse_faces;
    }
    Ok(h)
}

fn upsampling_matrix(
    fine: &[[f64; 3]],
    kept: &[usize],
    coarse: &[[f64; 3]],
    coarse_faces: &[[usize; 3]],
) -> Result<SparseMatrix> {
    let mut coarse_of = vec![None; fine.len()];
    for (c, &f) in kept.iter().enumerate() {
        coarse_of[f] = Some(c);
    }
    let mut triplets = Vec::new();
    for (i, p) in fine.iter().enumerate() {
        if let Some(c) = coarse_of[i] {
            triplets.push((i, c, 1.0));
            continue;
        }
        let best = coarse_faces
            .iter()
            .map(|tri| {
                let (q, bary) = closest_point_on_triangle(*p, coarse[tri[0]], coarse[tri[1]], coarse[tri[2]]);
                (dist2(*p, q), tri, bary)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((_, tri, bary)) => {
                for (&v, &w) in tri.iter().zip(bary.iter()) {
                    if w > 0.0 {
                        triplets.push((i, v, w));
                    }
                }
            }
            None => {
                let nearest = (0..coarse.len())
                    .min_by(|&a, &b| dist2(*p, coarse[a]).total_cmp(&dist2(*p, coarse[b])))
                    .ok_or_else(|| Error::Decimation("coarse level is empty".into()))?;
                triplets.push((i, nearest, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(fine.len(), coarse.len(), triplets)
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Closest point to `p` on triangle `abc` and its barycentric coordinates
/// (non-negative, summing to one).
pub(crate) fn closest_point_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let sub = |x: [f64; 3], y: [f64; 3]| [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let at = |u: f64, v: f64, w: f64| {
        (
            [
                u * a[0] + v * b[0] + w * c[0],
                u * a[1] + v * b[1] + w * c[1],
                u * a[2] + v * b[2] + w * c[2],
            ],
            [u, v, w],
        )
    };
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return at(1.0, 0.0, 0.0);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return at(0.0, 1.0, 0.0);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return at(1.0 - v, v, 0.0);
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return at(0.0, 0.0, 1.0);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return at(1.0 - w, 0.0, w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return at(0.0, 1.0 - w, w);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    at(1.0 - v - w, v, w)
}
