//! Per-frame dense losses. A batch is a `B x M x 3` array.

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::mesh::VertexWeights;
use crate::s2l::loss::{cos_dist, norm_diff};
use crate::{Error, Result};

fn check(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>) -> Result<()> {
    if gt.dim() != pred.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", gt.dim(), pred.dim())));
    }
    if gt.dim().0 == 0 || gt.dim().2 != 3 {
        return Err(Error::Shape(format!("expected a non-empty B x M x 3 batch, got {:?}", gt.dim())));
    }
    Ok(())
}

fn owned_std(a: &ArrayView3<f64>) -> Array3<f64> {
    a.as_standard_layout().into_owned()
}

fn per_sample(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    want_grad: bool,
    mut f: impl FnMut(usize, &[f64], &[f64], f64, Option<&mut [f64]>) -> f64,
) -> (f64, Option<Array3<f64>>) {
    let (b, m, _) = gt.dim();
    let (g, p) = (owned_std(gt), owned_std(pred));
    let (gs, ps) = (g.as_slice().unwrap(), p.as_slice().unwrap());
    let mut grad = want_grad.then(|| Array3::zeros(gt.dim()));
    let scale = 1.0 / b as f64;
    let w = 3 * m;
    let mut total = 0.0;
    for s in 0..b {
        let out = grad.as_mut().map(|gr| &mut gr.as_slice_mut().unwrap()[s * w..(s + 1) * w]);
        total += scale * f(s, &gs[s * w..(s + 1) * w], &ps[s * w..(s + 1) * w], scale, out);
    }
    (total, grad)
}

/// `(1/N) sum_n ||D_n - D^_n||_F`.
pub fn loss_dense_rec(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>) -> Result<f64> {
    check(gt, pred)?;
    Ok(per_sample(gt, pred, false, |_, g, p, s, o| norm_diff(g, p, s, o)).0)
}

pub fn loss_dense_rec_grad(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>) -> Result<(f64, Array3<f64>)> {
    check(gt, pred)?;
    let (v, g) = per_sample(gt, pred, true, |_, g, p, s, o| norm_diff(g, p, s, o));
    Ok((v, g.unwrap()))
}

/// Cosine distance over each sample's flattened `3M` vector.
pub fn loss_dense_cos(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, eps: f64) -> Result<f64> {
    check(gt, pred)?;
    check_eps(eps)?;
    Ok(per_sample(gt, pred, false, |_, g, p, s, o| cos_dist(g, p, eps, s, o)).0)
}

pub fn loss_dense_cos_grad(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, eps: f64) -> Result<(f64, Array3<f64>)> {
    check(gt, pred)?;
    check_eps(eps)?;
    let (v, g) = per_sample(gt, pred, true, |_, g, p, s, o| cos_dist(g, p, eps, s, o));
    Ok((v, g.unwrap()))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("cosine eps must be positive, got {eps}")));
    }
    Ok(())
}

fn weighted_sample(w: &[f64], g: &[f64], p: &[f64], scale: f64, mut out: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let r = 3 * i..3 * i + 3;
        let o = out.as_mut().map(|o| &mut o[r.clone()]);
        total += wi * norm_diff(&g[r.clone()], &p[r], scale * wi, o);
    }
    total
}

/// `(1/N) sum_n sum_i w_i ||p_i - p^_i||` on vertex positions.
pub fn loss_weighted(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, weights: &VertexWeights) -> Result<f64> {
    check(gt, pred)?;
    check_weights(gt, weights)?;
    Ok(per_sample(gt, pred, false, |_, g, p, s, o| weighted_sample(&weights.weights, g, p, s, o)).0)
}

pub fn loss_weighted_grad(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, weights: &VertexWeights) -> Result<(f64, Array3<f64>)> {
    check(gt, pred)?;
    check_weights(gt, weights)?;
    let (v, g) = per_sample(gt, pred, true, |_, g, p, s, o| weighted_sample(&weights.weights, g, p, s, o));
    Ok((v, g.unwrap()))
}

fn check_weights(gt: &ArrayView3<f64>, weights: &VertexWeights) -> Result<()> {
    if weights.len() != gt.dim().1 {
        return Err(Error::Shape(format!("{} weights for {} vertices", weights.len(), gt.dim().1)));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S2dLossWeights {
    pub lambda5: f64,
    pub lambda6: f64,
    pub lambda7: f64,
}

impl Default for S2dLossWeights {
    fn default() -> Self {
        S2dLossWeights {
            lambda5: 0.1,
            lambda6: 1e-4,
            lambda7: 1.0,
        }
    }
}

impl S2dLossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda5, self.lambda6, self.lambda7].iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn combine(&self, rec: f64, cos: f64, weighted: f64) -> S2dLossBreakdown {
        S2dLossBreakdown {
            rec,
            cos,
            weighted,
            total: self.lambda5 * rec + self.lambda6 * cos + self.lambda7 * weighted,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct S2dLossBreakdown {
    pub rec: f64,
    pub cos: f64,
    pub weighted: f64,
    pub total: f64,
}

impl S2dLossBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 3] {
        [("rec", self.rec), ("cos", self.cos), ("weighted", self.weighted)]
    }
}

/// Total objective on displacements; the weighted term compares the meshes
/// `neutral + D`. Returns the gradient w.r.t. `pred`.
pub fn loss_s2d_total_grad(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    neutral: &ArrayView3<f64>,
    vertex_weights: &VertexWeights,
    weights: &S2dLossWeights,
    cos_eps: f64,
) -> Result<(S2dLossBreakdown, Array3<f64>)> {
    check(gt, neutral)?;
    let (rec, g1) = loss_dense_rec_grad(gt, pred)?;
    let (cos, g2) = loss_dense_cos_grad(gt, pred, cos_eps)?;
    let m_gt = gt + neutral;
    let m_hat = pred + neutral;
    let (wl, g3) = loss_weighted_grad(&m_gt.view(), &m_hat.view(), vertex_weights)?;
    let grad = g1 * weights.lambda5 + g2 * weights.lambda6 + g3 * weights.lambda7;
    Ok((weights.combine(rec, cos, wl), grad))
}

pub fn loss_s2d_total(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    neutral: &ArrayView3<f64>,
    vertex_weights: &VertexWeights,
    weights: &S2dLossWeights,
    cos_eps: f64,
) -> Result<S2dLossBreakdown> {
    check(gt, neutral)?;
    let m_gt = gt + neutral;
    let m_hat = pred + neutral;
    Ok(weights.combine(
        loss_dense_rec(gt, pred)?,
        loss_dense_cos(gt, pred, cos_eps)?,
        loss_weighted(&m_gt.view(), &m_hat.view(), vertex_weights)?,
    ))
}
