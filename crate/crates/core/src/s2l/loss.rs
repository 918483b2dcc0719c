//! Sequence losses on landmark displacements.
//!
//! A batch is a slice of `T_n x L x 3` arrays. Every loss averages per
//! sequence first (`1 / T_n`) and then over the `N` sequences, so sequences
//! of different length can share a batch without padding.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the cosine term compares two displacement frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineMode {
    /// One cosine per frame over the flattened `3L` vector.
    #[default]
    Flattened,
    /// Mean of per-landmark cosines within the frame.
    PerLandmark,
}

/// Frobenius norm of `p - g`; adds `scale * d/dp` into `grad` when given.
pub(crate) fn norm_diff(g: &[f64], p: &[f64], scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let n = g.iter().zip(p).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    if let Some(out) = grad {
        if n > 0.0 {
            let s = scale / n;
            for ((o, a), b) in out.iter_mut().zip(g).zip(p) {
                *o += s * (b - a);
            }
        }
    }
    n
}

/// `1 - cos(g, p)` with both norms floored at `eps`; adds `scale * d/dp`.
pub(crate) fn cos_dist(g: &[f64], p: &[f64], eps: f64, scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
    let a = ng.max(eps);
    let b = np.max(eps);
    let cos = dot / (a * b);
    if let Some(out) = grad {
        if np > eps {
            let k1 = -scale / (a * b);
            let k2 = scale * dot / (a * b * b * b);
            for ((o, gv), pv) in out.iter_mut().zip(g).zip(p) {
                *o += k1 * gv + k2 * pv;
            }
        } else {
            let k = -scale / (a * b);
            for (o, gv) in out.iter_mut().zip(g) {
                *o += k * gv;
            }
        }
    }
    1.0 - cos
}

fn check_batch(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if gt.len() != pred.len() {
        return Err(Error::Shape(format!("{} ground-truth vs {} predicted sequences", gt.len(), pred.len())));
    }
    for (n, (g, p)) in gt.iter().zip(pred).enumerate() {
        if g.dim() != p.dim() || g.dim().2 != 3 || g.dim().0 == 0 {
            return Err(Error::Shape(format!("sequence {n}: {:?} vs {:?}", g.dim(), p.dim())));
        }
    }
    Ok(())
}

fn contiguous(a: &Array3<f64>) -> std::borrow::Cow<'_, [f64]> {
    match a.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(a.iter().copied().collect()),
    }
}

fn zero_grads(pred: &[Array3<f64>]) -> Vec<Array3<f64>> {
    pred.iter().map(|p| Array3::zeros(p.dim())).collect()
}

fn gather(frame: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().flat_map(|&r| frame[3 * r..3 * r + 3].iter().copied()).collect()
}

fn check_indices(indices: &[usize], l: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Shape("mouth/jaw index set is empty".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= l) {
        return Err(Error::Shape(format!("landmark index {bad} out of range for {l} landmarks")));
    }
    Ok(())
}

fn rec_impl(gt: &[Array3<f64>], pred: &[Array3<f64>], rows: Option<&[usize]>, mut grads: Option<&mut Vec<Array3<f64>>>) -> f64 {
    let n = gt.len() as f64;
    let mut total = 0.0;
    for (s, (g, p)) in gt.iter().zip(pred).enumerate() {
        let (t_n, l, _) = g.dim();
        let (gs, ps) = (contiguous(g), contiguous(p));
        let scale = 1.0 / (n * t_n as f64);
        for t in 0..t_n {
            let rng = t * l * 3..(t + 1) * l * 3;
            let (gf, pf) = (&gs[rng.clone()], &ps[rng.clone()]);
            match rows {
                None => {
                    let out = grads.as_mut().map(|gr| &mut gr[s].as_slice_mut().unwrap()[rng.clone()]);
                    total += scale * norm_diff(gf, pf, scale, out);
                }
                Some(rows) => {
                    let (gg, pg) = (gather(gf, rows), gather(pf, rows));
                    let mut local = vec![0.0; gg.len()];
                    total += scale * norm_diff(&gg, &pg, scale, Some(&mut local));
                    if let Some(gr) = grads.as_mut() {
                        let out = &mut gr[s].as_slice_mut().unwrap()[rng.clone()];
                        for (k, &r) in rows.iter().enumerate() {
                            for c in 0..3 {
                                out[3 * r + c] += local[3 * k + c];
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

pub fn loss_rec(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> Result<f64> {
    check_batch(gt, pred)?;
    Ok(rec_impl(gt, pred, None, None))
}

pub fn loss_rec_grad(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> Result<(f64, Vec<Array3<f64>>)> {
    check_batch(gt, pred)?;
    let mut grads = zero_grads(pred);
    let v = rec_impl(gt, pred, None, Some(&mut grads));
    Ok((v, grads))
}

/// [`loss_rec`] restricted to the landmarks in `mouth_jaw`.
pub fn loss_mouth(gt: &[Array3<f64>], pred: &[Array3<f64>], mouth_jaw: &[usize]) -> Result<f64> {
    check_batch(gt, pred)?;
    check_indices(mouth_jaw, gt[0].dim().1)?;
    Ok(rec_impl(gt, pred, Some(mouth_jaw), None))
}

pub fn loss_mouth_grad(gt: &[Array3<f64>], pred: &[Array3<f64>], mouth_jaw: &[usize]) -> Result<(f64, Vec<Array3<f64>>)> {
    check_batch(gt, pred)?;
    check_indices(mouth_jaw, gt[0].dim().1)?;
    let mut grads = zero_grads(pred);
    let v = rec_impl(gt, pred, Some(mouth_jaw), Some(&mut grads));
    Ok((v, grads))
}

fn cos_impl(gt: &[Array3<f64>], pred: &[Array3<f64>], eps: f64, mode: CosineMode, mut grads: Option<&mut Vec<Array3<f64>>>) -> f64 {
    let n = gt.len() as f64;
    let mut total = 0.0;
    for (s, (g, p)) in gt.iter().zip(pred).enumerate() {
        let (t_n, l, _) = g.dim();
        let (gs, ps) = (contiguous(g), contiguous(p));
        let scale = 1.0 / (n * t_n as f64);
        for t in 0..t_n {
            let base = t * l * 3;
            match mode {
                CosineMode::Flattened => {
                    let rng = base..base + l * 3;
                    let out = grads.as_mut().map(|gr| &mut gr[s].as_slice_mut().unwrap()[rng.clone()]);
                    total += scale * cos_dist(&gs[rng.clone()], &ps[rng.clone()], eps, scale, out);
                }
                CosineMode::PerLandmark => {
                    let sc = scale / l as f64;
                    for j in 0..l {
                        let rng = base + 3 * j..base + 3 * j + 3;
                        let out = grads.as_mut().map(|gr| &mut gr[s].as_slice_mut().unwrap()[rng.clone()]);
                        total += sc * cos_dist(&gs[rng.clone()], &ps[rng.clone()], eps, sc, out);
                    }
                }
            }
        }
    }
    total
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("cosine eps must be positive, got {eps}")));
    }
    Ok(())
}

pub fn loss_cos(gt: &[Array3<f64>], pred: &[Array3<f64>], eps: f64) -> Result<f64> {
    loss_cos_with(gt, pred, eps, CosineMode::Flattened)
}

pub fn loss_cos_with(gt: &[Array3<f64>], pred: &[Array3<f64>], eps: f64, mode: CosineMode) -> Result<f64> {
    check_batch(gt, pred)?;
    check_eps(eps)?;
    Ok(cos_impl(gt, pred, eps, mode, None))
}

pub fn loss_cos_grad(gt: &[Array3<f64>], pred: &[Array3<f64>], eps: f64, mode: CosineMode) -> Result<(f64, Vec<Array3<f64>>)> {
    check_batch(gt, pred)?;
    check_eps(eps)?;
    let mut grads = zero_grads(pred);
    let v = cos_impl(gt, pred, eps, mode, Some(&mut grads));
    Ok((v, grads))
}

fn vel_impl(gt: &[Array3<f64>], pred: &[Array3<f64>], mut grads: Option<&mut Vec<Array3<f64>>>) -> f64 {
    let n = gt.len() as f64;
    let mut total = 0.0;
    for (s, (g, p)) in gt.iter().zip(pred).enumerate() {
        let (t_n, l, _) = g.dim();
        let (gs, ps) = (contiguous(g), contiguous(p));
        let scale = 1.0 / (n * t_n as f64);
        let w = l * 3;
        let mut e = vec![0.0; w];
        for t in 1..t_n {
            for k in 0..w {
                e[k] = (ps[t * w + k] - ps[(t - 1) * w + k]) - (gs[t * w + k] - gs[(t - 1) * w + k]);
            }
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            total += scale * norm;
            if let (Some(gr), true) = (grads.as_mut(), norm > 0.0) {
                let out = gr[s].as_slice_mut().unwrap();
                for k in 0..w {
                    let u = scale * e[k] / norm;
                    out[t * w + k] += u;
                    out[(t - 1) * w + k] -= u;
                }
            }
        }
    }
    total
}

/// Mismatch of frame-to-frame differences. The per-sequence sum over the
/// `T_n - 1` consecutive pairs is divided by `T_n`; length-one sequences add
/// nothing but still count towards `N`.
pub fn loss_vel(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> Result<f64> {
    check_batch(gt, pred)?;
    Ok(vel_impl(gt, pred, None))
}

pub fn loss_vel_grad(gt: &[Array3<f64>], pred: &[Array3<f64>]) -> Result<(f64, Vec<Array3<f64>>)> {
    check_batch(gt, pred)?;
    let mut grads = zero_grads(pred);
    let v = vel_impl(gt, pred, Some(&mut grads));
    Ok((v, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S2lLossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for S2lLossWeights {
    fn default() -> Self {
        S2lLossWeights {
            lambda1: 0.1,
            lambda2: 1.0,
            lambda3: 1e-4,
            lambda4: 10.0,
        }
    }
}

impl S2lLossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
            .iter()
            .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn combine(&self, rec: f64, mouth: f64, cos: f64, vel: f64) -> S2lLossBreakdown {
        S2lLossBreakdown {
            rec,
            mouth,
            cos,
            vel,
            total: self.lambda1 * rec + self.lambda2 * mouth + self.lambda3 * cos + self.lambda4 * vel,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct S2lLossBreakdown {
    pub rec: f64,
    pub mouth: f64,
    pub cos: f64,
    pub vel: f64,
    pub total: f64,
}

impl S2lLossBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 4] {
        [("rec", self.rec), ("mouth", self.mouth), ("cos", self.cos), ("vel", self.vel)]
    }
}

/// Options shared by the total objective.
#[derive(Clone, Debug, PartialEq)]
pub struct S2lObjective<'a> {
    pub weights: S2lLossWeights,
    pub mouth_jaw: &'a [usize],
    pub cos_eps: f64,
    pub cos_mode: CosineMode,
}

pub fn loss_s2l_total(gt: &[Array3<f64>], pred: &[Array3<f64>], obj: &S2lObjective) -> Result<S2lLossBreakdown> {
    Ok(obj.weights.combine(
        loss_rec(gt, pred)?,
        loss_mouth(gt, pred, obj.mouth_jaw)?,
        loss_cos_with(gt, pred, obj.cos_eps, obj.cos_mode)?,
        loss_vel(gt, pred)?,
    ))
}

/// Total objective and its gradient w.r.t. the predictions.
pub fn loss_s2l_total_grad(gt: &[Array3<f64>], pred: &[Array3<f64>], obj: &S2lObjective) -> Result<(S2lLossBreakdown, Vec<Array3<f64>>)> {
    let (rec, g1) = loss_rec_grad(gt, pred)?;
    let (mouth, g2) = loss_mouth_grad(gt, pred, obj.mouth_jaw)?;
    let (cos, g3) = loss_cos_grad(gt, pred, obj.cos_eps, obj.cos_mode)?;
    let (vel, g4) = loss_vel_grad(gt, pred)?;
    let w = obj.weights;
    let grads = (0..pred.len())
        .map(|i| &g1[i] * w.lambda1 + &g2[i] * w.lambda2 + &g3[i] * w.lambda3 + &g4[i] * w.lambda4)
        .collect();
    Ok((w.combine(rec, mouth, cos, vel), grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(t: usize, l: usize, f: impl Fn(usize, usize, usize) -> f64) -> Array3<f64> {
        Array3::from_shape_fn((t, l, 3), |(a, b, c)| f(a, b, c))
    }

    #[test]
    fn rec_examples() {
        let g = seq(1, 68, |_, _, _| 0.0);
        let p = seq(1, 68, |_, _, c| if c == 0 { 1.0 } else { 0.0 });
        assert!((loss_rec(&[g.clone()], &[p]).unwrap() - 68f64.sqrt()).abs() < 1e-12);
        assert_eq!(loss_rec(&[g.clone()], &[g.clone()]).unwrap(), 0.0);

        let z = seq(1, 1, |_, _, _| 0.0);
        let one = seq(1, 1, |_, _, c| if c == 0 { 1.0 } else { 0.0 });
        let three = seq(1, 1, |_, _, c| if c == 0 { 3.0 } else { 0.0 });
        let v = loss_rec(&[z.clone(), z], &[one, three]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mouth_examples() {
        let mj: Vec<usize> = (0..=16).chain(48..=67).collect();
        let g = seq(1, 68, |_, _, _| 0.0);
        let p = seq(1, 68, |_, j, c| if c == 1 && mj.contains(&j) { 1.0 } else { 0.0 });
        assert!((loss_mouth(&[g.clone()], &[p], &mj).unwrap() - 37f64.sqrt()).abs() < 1e-12);
        let elsewhere = seq(1, 68, |_, j, _| if mj.contains(&j) { 0.0 } else { 5.0 });
        assert_eq!(loss_mouth(&[g.clone()], &[elsewhere], &mj).unwrap(), 0.0);
        assert!(loss_mouth(&[g.clone()], &[g.clone()], &[]).is_err());
        assert!(loss_mouth(&[g.clone()], &[g], &[68]).is_err());
    }

    #[test]
    fn cos_examples() {
        let d = seq(2, 4, |t, j, c| (t + j + c) as f64 - 2.5);
        assert!(loss_cos(&[d.clone()], &[d.clone()], 1e-8).unwrap().abs() < 1e-12);
        assert!((loss_cos(&[d.clone()], &[-&d], 1e-8).unwrap() - 2.0).abs() < 1e-12);
        let e0 = seq(1, 3, |_, j, c| if j == 0 && c == 0 { 1.0 } else { 0.0 });
        let e1 = seq(1, 3, |_, j, c| if j == 0 && c == 1 { 1.0 } else { 0.0 });
        assert!((loss_cos(&[e0], &[e1], 1e-8).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cos_zero_ground_truth_is_finite() {
        let z = seq(3, 2, |_, _, _| 0.0);
        let p = seq(3, 2, |t, _, _| t as f64);
        let (v, g) = loss_cos_grad(&[z.clone()], &[p], 1e-8, CosineMode::Flattened).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(g[0].iter().all(|x| x.is_finite()));
        assert!(loss_cos(&[z.clone()], &[z], 0.0).is_err());
    }

    #[test]
    fn vel_examples() {
        let g = seq(3, 1, |t, _, c| if c == 0 { t as f64 } else { 0.0 });
        let p = seq(3, 1, |_, _, _| 0.0);
        assert!((loss_vel(&[g.clone()], &[p]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let shifted = g.mapv(|v| v + 0.7);
        assert!(loss_vel(&[g.clone()], &[shifted]).unwrap().abs() < 1e-12);
        let single = seq(1, 2, |_, _, _| 1.0);
        assert_eq!(loss_vel(&[single.clone()], &[single.mapv(|v| -v)]).unwrap(), 0.0);
    }

    #[test]
    fn total_arithmetic() {
        let b = S2lLossWeights::default().combine(1.0, 1.0, 1.0, 1.0);
        assert!((b.total - 11.1001).abs() < 1e-12);
        assert_eq!(S2lLossWeights::default().combine(0.0, 0.0, 0.0, 0.0).total, 0.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = seq(2, 3, |_, _, _| 0.0);
        let b = seq(3, 3, |_, _, _| 0.0);
        assert!(loss_rec(&[a.clone()], &[b]).is_err());
        assert!(loss_vel(&[a.clone()], &[]).is_err());
        assert!(loss_rec(&[], &[]).is_err());
    }
}
