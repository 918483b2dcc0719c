//! Slow reference implementations for cross-checking the production code.
//! Compiled for tests and with the `oracle` feature.

use std::collections::VecDeque;

use ndarray::{Array3, ArrayView3};

use crate::mesh::{Mesh, SPIRAL_PAD};

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Spirals by BFS rings from an edge scan, each ring sorted by angle in the
/// centre's tangent plane (counter-clockwise about the area-weighted
/// normal) and rotated to start at its smallest index.
pub fn spiral_oracle(mesh: &Mesh, spiral_length: usize, dilation: usize) -> Vec<i32> {
    let n = mesh.vertex_count();
    let p = &mesh.vertices;
    let mut out = Vec::with_capacity(n * spiral_length);
    for c in 0..n {
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for f in &mesh.faces {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j && !nbrs[f[i]].contains(&f[j]) {
                        nbrs[f[i]].push(f[j]);
                    }
                }
            }
        }
        let mut dist = vec![usize::MAX; n];
        dist[c] = 0;
        let mut q = VecDeque::from([c]);
        while let Some(u) = q.pop_front() {
            for &w in &nbrs[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        let mut normal = [0.0; 3];
        for f in mesh.faces.iter().filter(|f| f.contains(&c)) {
            let fnrm = cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]));
            for k in 0..3 {
                normal[k] += fnrm[k];
            }
        }
        let mut seq = vec![c];
        if dot(normal, normal) > 0.0 {
            let nz = normalize(normal);
            let helper = if nz[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let e1 = normalize(cross(helper, nz));
            let e2 = cross(nz, e1);
            let max_d = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0);
            for k in 1..=max_d {
                let mut ring: Vec<(f64, usize)> = (0..n)
                    .filter(|&v| dist[v] == k)
                    .map(|v| {
                        let r = sub(p[v], p[c]);
                        (dot(r, e2).atan2(dot(r, e1)), v)
                    })
                    .collect();
                ring.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut ids: Vec<usize> = ring.into_iter().map(|(_, v)| v).collect();
                let lo = (0..ids.len()).min_by_key(|&i| ids[i]).unwrap();
                ids.rotate_left(lo);
                seq.extend(ids);
            }
        }
        for s in 0..spiral_length {
            out.push(seq.get(s * dilation).map_or(SPIRAL_PAD, |&v| v as i32));
        }
    }
    out
}

fn point_dist(a: &ArrayView3<f64>, b: &ArrayView3<f64>, k: usize, i: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..3 {
        let d = a[[k, i, c]] - b[[k, i, c]];
        s += d * d;
    }
    s.sqrt()
}

pub fn lips_error_naive(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, lips: &[usize], global_max: bool) -> f64 {
    let frames = pred.shape()[0];
    let mut acc = 0.0;
    for k in 0..frames {
        let mut worst = 0.0;
        for &i in lips {
            let d = point_dist(pred, gt, k, i);
            if d > worst {
                worst = d;
            }
        }
        if global_max {
            if worst > acc {
                acc = worst;
            }
        } else {
            acc += worst;
        }
    }
    if global_max {
        acc
    } else {
        acc / frames as f64
    }
}

pub fn displacement_error_naive(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>) -> f64 {
    let (frames, points) = (pred.shape()[0], pred.shape()[1]);
    let mut acc = 0.0;
    for k in 0..frames {
        for i in 0..points {
            acc += point_dist(pred, gt, k, i);
        }
    }
    acc / (frames * points) as f64
}

pub fn displacement_angle_error_naive(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, eps: f64, global_max: bool) -> f64 {
    let (frames, points) = (pred.shape()[0], pred.shape()[1]);
    let mut acc = 0.0;
    let mut counted = 0;
    for k in 0..frames {
        let mut worst: Option<f64> = None;
        for i in 0..points {
            let (mut na, mut nb) = (0.0, 0.0);
            for c in 0..3 {
                na += pred[[k, i, c]] * pred[[k, i, c]];
                nb += gt[[k, i, c]] * gt[[k, i, c]];
            }
            let (na, nb) = (na.sqrt(), nb.sqrt());
            if na < eps || nb < eps {
                continue;
            }
            // half-angle form: 2 atan2(|a^ - b^|, |a^ + b^|)
            let (mut dm, mut dp) = (0.0, 0.0);
            for c in 0..3 {
                let (u, v) = (pred[[k, i, c]] / na, gt[[k, i, c]] / nb);
                dm += (u - v) * (u - v);
                dp += (u + v) * (u + v);
            }
            let t = 2.0 * dm.sqrt().atan2(dp.sqrt());
            worst = Some(worst.map_or(t, |w: f64| w.max(t)));
        }
        if let Some(w) = worst {
            counted += 1;
            if global_max {
                acc = f64::max(acc, w);
            } else {
                acc += w;
            }
        }
    }
    if global_max || counted == 0 {
        acc
    } else {
        acc / counted as f64
    }
}

fn frame_norm(gt: &Array3<f64>, pred: &Array3<f64>, t: usize, rows: &[usize]) -> f64 {
    let mut s = 0.0;
    for &l in rows {
        for c in 0..3 {
            let d = pred[[t, l, c]] - gt[[t, l, c]];
            s += d * d;
        }
    }
    s.sqrt()
}

/// `(1/N) sum_n (1/T_n) sum_t ||pred - gt||_F` over the given landmark rows.
pub fn loss_rows_naive(gt: &[Array3<f64>], pred: &[Array3<f64>], rows: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        let t_n = g.shape()[0];
        let mut s = 0.0;
        for t in 0..t_n {
            s += frame_norm(g, p, t, rows);
        }
        acc += s / t_n as f64;
    }
    acc / gt.len() as f64
}

pub fn loss_rec_naive(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> f64 {
    let all: Vec<usize> = (0..gt[0].shape()[1]).collect();
    loss_rows_naive(gt, pred, &all)
}

pub fn loss_cos_naive(gt: &[Array3<f64>], pred: &[Array3<f64>], eps: f64) -> f64 {
    let mut acc = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        let (t_n, l_n) = (g.shape()[0], g.shape()[1]);
        let mut s = 0.0;
        for t in 0..t_n {
            let (mut d, mut ng, mut np) = (0.0, 0.0, 0.0);
            for l in 0..l_n {
                for c in 0..3 {
                    d += g[[t, l, c]] * p[[t, l, c]];
                    ng += g[[t, l, c]] * g[[t, l, c]];
                    np += p[[t, l, c]] * p[[t, l, c]];
                }
            }
            s += 1.0 - d / (ng.sqrt().max(eps) * np.sqrt().max(eps));
        }
        acc += s / t_n as f64;
    }
    acc / gt.len() as f64
}

pub fn loss_vel_naive(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> f64 {
    let mut acc = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        let (t_n, l_n) = (g.shape()[0], g.shape()[1]);
        let mut s = 0.0;
        for t in 1..t_n {
            let mut sq = 0.0;
            for l in 0..l_n {
                for c in 0..3 {
                    let d = (p[[t, l, c]] - p[[t - 1, l, c]]) - (g[[t, l, c]] - g[[t - 1, l, c]]);
                    sq += d * d;
                }
            }
            s += sq.sqrt();
        }
        acc += s / t_n as f64;
    }
    acc / gt.len() as f64
}

/// `(1/B) sum_b sum_i w_i ||pred_bi - gt_bi||`.
pub fn loss_weighted_naive(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, w: &[f64]) -> f64 {
    let (b_n, m) = (gt.shape()[0], gt.shape()[1]);
    let mut acc = 0.0;
    for b in 0..b_n {
        for (i, wi) in w.iter().enumerate().take(m) {
            acc += wi * point_dist(pred, gt, b, i);
        }
    }
    acc / b_n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::compute_spirals;
    use crate::mesh::primitives::{grid, icosphere};

    #[test]
    fn spiral_oracle_agrees_with_ring_walker() {
        for mesh in [icosphere(2, 1.0), grid(10, 10, 1.0)] {
            for len in [1, 7, 12] {
                for dil in [1, 2] {
                    let fast = compute_spirals(mesh.vertex_count(), &mesh.faces, len, dil).unwrap();
                    let slow = spiral_oracle(&mesh, len, dil);
                    for v in 0..mesh.vertex_count() {
                        assert_eq!(fast.spiral(v), &slow[v * len..(v + 1) * len], "v={v} len={len} dil={dil}");
                    }
                }
            }
        }
    }
}
