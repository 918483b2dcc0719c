use ndarray::Array2;

use super::{extract_landmarks, Mesh, Topology};
use crate::{Error, Result};

/// Distance floor (mm) for landmark-proximity weights: landmarks are mesh
/// vertices, so their own distance to the nearest landmark is zero.
pub const DEFAULT_WEIGHT_EPS: f64 = 1e-3;

/// Per-vertex weights `1 / max(eps, distance to nearest landmark)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexWeights {
    pub weights: Vec<f64>,
}

impl VertexWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn compute_landmark_weights(neutral: &Mesh, topo: &Topology, eps: f64) -> Result<VertexWeights> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("weight eps must be positive, got {eps}")));
    }
    let landmarks: Array2<f64> = extract_landmarks(neutral, topo)?;
    let weights = neutral
        .vertices
        .iter()
        .map(|p| {
            let d = landmarks
                .rows()
                .into_iter()
                .map(|l| ((p[0] - l[0]).powi(2) + (p[1] - l[1]).powi(2) + (p[2] - l[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            1.0 / d.max(eps)
        })
        .collect();
    Ok(VertexWeights { weights })
}
