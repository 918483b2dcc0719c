//! Sparse-to-dense decoder: landmark displacements are lifted onto the
//! coarsest mesh level, then refined by spiral convolutions, each followed
//! by ELU and barycentric upsampling, down to a final 3-channel spiral
//! convolution on the full-resolution mesh.

pub mod loss;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, SparseMatrix, SpiralIndexTable, TopologyAssets};
use crate::nn::spiral_conv::{resample, resample_backward, spiral_conv_backward, spiral_conv_forward};
use crate::nn::{elu, elu_grad_from_output, linear, linear_backward, ParamId, ParamLayout};
use crate::{Error, Result};

pub use loss::{
    loss_dense_cos, loss_dense_cos_grad, loss_dense_rec, loss_dense_rec_grad, loss_s2d_total, loss_s2d_total_grad,
    loss_weighted, loss_weighted_grad, S2dLossBreakdown, S2dLossWeights,
};

/// How the scattered landmark displacements enter the coarsest level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMode {
    /// Learned linear map from the flattened `3L` vector to `N_coarse x C`.
    #[default]
    Linear,
    /// Each landmark's displacement is averaged onto its nearest coarse
    /// vertex; other vertices start at zero.
    Scatter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S2dConfig {
    /// Output width of each spiral layer, coarsest first.
    pub layer_channels: Vec<usize>,
    /// Channels produced by the lift (linear mode only).
    pub lift_channels: usize,
    pub lift: LiftMode,
    pub landmark_count: usize,
    #[serde(flatten)]
    pub weights: S2dLossWeights,
    pub cos_eps: f64,
}

impl Default for S2dConfig {
    fn default() -> Self {
        S2dConfig {
            layer_channels: vec![64, 64, 32, 32, 16],
            lift_channels: 64,
            lift: LiftMode::Linear,
            landmark_count: 68,
            weights: S2dLossWeights::default(),
            cos_eps: 1e-8,
        }
    }
}

impl S2dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_channels.is_empty() || self.layer_channels.contains(&0) || self.lift_channels == 0 {
            return Err(Error::Config("s2d channel widths must be positive".into()));
        }
        if self.landmark_count == 0 {
            return Err(Error::Config("landmark_count must be positive".into()));
        }
        self.weights.validate()?;
        if !(self.cos_eps > 0.0) {
            return Err(Error::Config("cos_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvIds {
    w: ParamId,
    b: ParamId,
    in_channels: usize,
}

/// Decoder bound to one set of topology assets.
#[derive(Clone, Debug)]
pub struct S2dModel {
    pub config: S2dConfig,
    pub layout: ParamLayout,
    pub topology_hash: String,
    level_sizes: Vec<usize>,
    spirals: Vec<SpiralIndexTable>,
    up: Vec<SparseMatrix>,
    lift: Option<(ParamId, ParamId)>,
    scatter: Vec<Option<usize>>,
    scatter_counts: Vec<usize>,
    convs: Vec<ConvIds>,
}

pub struct S2dCache {
    batch: usize,
    input: Array2<f64>,
    gathered: Vec<Array2<f64>>,
    activated: Vec<Array2<f64>>,
}

impl S2dModel {
    pub fn new(config: S2dConfig, assets: &TopologyAssets) -> Result<Self> {
        config.validate()?;
        let depth = assets.hierarchy.depth();
        if config.layer_channels.len() != depth {
            return Err(Error::Config(format!(
                "{} decoder layers configured but the hierarchy has {depth} levels",
                config.layer_channels.len()
            )));
        }
        if config.landmark_count != assets.topology.landmark_count() {
            return Err(Error::Config(format!(
                "decoder expects {} landmarks, topology has {}",
                config.landmark_count,
                assets.topology.landmark_count()
            )));
        }
        let spirals = assets.spirals()?;
        let level_sizes = assets.hierarchy.level_sizes.clone();
        let coarse = level_sizes[depth];
        let mut layout = ParamLayout::new();
        let l3 = 3 * config.landmark_count;
        let (lift, mut cin, scatter, scatter_counts) = match config.lift {
            LiftMode::Linear => {
                let w = layout.add("lift.weight", &[coarse * config.lift_channels, l3]);
                let b = layout.add("lift.bias", &[coarse * config.lift_channels]);
                (Some((w, b)), config.lift_channels, Vec::new(), Vec::new())
            }
            LiftMode::Scatter => {
                let (map, counts) = scatter_map(assets)?;
                (None, 3, map, counts)
            }
        };
        let mut convs = Vec::new();
        for (k, &cout) in config.layer_channels.iter().enumerate() {
            let level = depth - k;
            let s = spirals[level].spiral_length;
            convs.push(ConvIds {
                w: layout.add(format!("conv{k}.weight"), &[cout, s * cin]),
                b: layout.add(format!("conv{k}.bias"), &[cout]),
                in_channels: cin,
            });
            cin = cout;
        }
        let s0 = spirals[0].spiral_length;
        convs.push(ConvIds {
            w: layout.add("out.weight", &[3, s0 * cin]),
            b: layout.add("out.bias", &[3]),
            in_channels: cin,
        });
        Ok(S2dModel {
            config,
            layout,
            topology_hash: assets.content_hash(),
            level_sizes,
            spirals,
            up: assets.hierarchy.up.clone(),
            lift,
            scatter,
            scatter_counts,
            convs,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.level_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.layout.total()];
        let mut pairs: Vec<(ParamId, ParamId)> = self.convs.iter().map(|c| (c.w, c.b)).collect();
        pairs.extend(self.lift);
        for (w, b) in pairs {
            let fan_in = self.layout.entry(w).shape[1] as f64;
            let bound = 1.0 / fan_in.sqrt();
            self.layout.fill_uniform(&mut p, w, bound, rng);
            self.layout.fill_uniform(&mut p, b, bound, rng);
        }
        p
    }

    pub fn zero_output_layer(&self, params: &mut [f64]) {
        let last = self.convs.last().expect("output layer");
        self.layout.slice_mut(params, last.w).fill(0.0);
        self.layout.slice_mut(params, last.b).fill(0.0);
    }

    pub fn zero_biases(&self, params: &mut [f64]) {
        for c in &self.convs {
            self.layout.slice_mut(params, c.b).fill(0.0);
        }
        if let Some((_, b)) = self.lift {
            self.layout.slice_mut(params, b).fill(0.0);
        }
    }

    /// Dense `M x 3` displacement for one `L x 3` landmark displacement.
    pub fn forward(&self, params: &[f64], landmarks: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let l = self.config.landmark_count;
        if landmarks.dim() != (l, 3) {
            return Err(Error::Shape(format!("expected {l}x3 landmark displacements, got {:?}", landmarks.dim())));
        }
        let batch = landmarks.to_owned().into_shape_with_order((1, l, 3)).expect("shape");
        let (out, _) = self.forward_batch(params, &batch.view())?;
        Ok(out.index_axis_move(ndarray::Axis(0), 0))
    }

    /// Batched forward, `B x L x 3` in and `B x M x 3` out.
    pub fn forward_batch(&self, params: &[f64], landmarks: &ArrayView3<f64>) -> Result<(Array3<f64>, S2dCache)> {
        if params.len() != self.layout.total() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.layout.total(), params.len())));
        }
        let (batch, l, c) = landmarks.dim();
        if l != self.config.landmark_count || c != 3 || batch == 0 {
            return Err(Error::Shape(format!(
                "expected B x {} x 3 landmark displacements, got {:?}",
                self.config.landmark_count,
                landmarks.dim()
            )));
        }
        let depth = self.level_sizes.len() - 1;
        let coarse = self.level_sizes[depth];
        let input = landmarks.as_standard_layout().into_owned().into_shape_with_order((batch, 3 * l)).expect("shape");
        let mut x = match self.lift {
            Some((w, b)) => {
                let y = linear(&input.view(), &self.layout.mat(params, w), self.layout.slice(params, b));
                y.into_shape_with_order((batch * coarse, self.config.lift_channels)).expect("shape")
            }
            None => {
                let mut x = Array2::zeros((batch * coarse, 3));
                for s in 0..batch {
                    for (j, v) in self.scatter.iter().enumerate() {
                        if let Some(v) = *v {
                            let k = 1.0 / self.scatter_counts[v] as f64;
                            for d in 0..3 {
                                x[[s * coarse + v, d]] += k * input[[s, 3 * j + d]];
                            }
                        }
                    }
                }
                x
            }
        };
        let mut gathered = Vec::with_capacity(self.convs.len());
        let mut activated = Vec::with_capacity(depth);
        for (k, conv) in self.convs.iter().enumerate() {
            let level = depth.saturating_sub(k);
            let (g, mut y) = spiral_conv_forward(
                &x.view(),
                batch,
                &self.spirals[level],
                &self.layout.mat(params, conv.w),
                self.layout.slice(params, conv.b),
            );
            gathered.push(g);
            if k < depth {
                y.mapv_inplace(elu);
                x = resample(&self.up[level - 1], &y.view(), batch);
                activated.push(y);
            } else {
                x = y;
            }
        }
        let m = self.level_sizes[0];
        let out = x.into_shape_with_order((batch, m, 3)).expect("shape");
        Ok((
            out,
            S2dCache {
                batch,
                input,
                gathered,
                activated,
            },
        ))
    }

    pub fn backward(&self, params: &[f64], cache: &S2dCache, d_out: &ArrayView3<f64>) -> Vec<f64> {
        let batch = cache.batch;
        let depth = self.level_sizes.len() - 1;
        let m = self.level_sizes[0];
        let mut grads = vec![0.0; self.layout.total()];
        let mut dy = d_out.as_standard_layout().into_owned().into_shape_with_order((batch * m, 3)).expect("shape");
        for k in (0..self.convs.len()).rev() {
            let conv = self.convs[k];
            let level = depth.saturating_sub(k);
            if k < depth {
                let a = &cache.activated[k];
                let mut d = resample_backward(&self.up[level - 1], &dy.view(), batch);
                d.zip_mut_with(a, |g, &y| *g *= elu_grad_from_output(y));
                dy = d;
            }
            let (r, c) = self.layout.dims2(conv.w);
            let [gw, gb] = self.layout.slices_mut(&mut grads, [conv.w, conv.b]);
            let mut gw = ArrayViewMut2::from_shape((r, c), gw).expect("shape");
            dy = spiral_conv_backward(
                &cache.gathered[k].view(),
                &dy.view(),
                batch,
                &self.spirals[level],
                &self.layout.mat(params, conv.w),
                &mut gw,
                gb,
                conv.in_channels,
            );
        }
        if let Some((w, b)) = self.lift {
            let coarse = self.level_sizes[depth];
            let dl = dy.into_shape_with_order((batch, coarse * self.config.lift_channels)).expect("shape");
            let (r, c) = self.layout.dims2(w);
            let [gw, gb] = self.layout.slices_mut(&mut grads, [w, b]);
            let mut gw = ArrayViewMut2::from_shape((r, c), gw).expect("shape");
            linear_backward(&cache.input.view(), &self.layout.mat(params, w), &dl.view(), &mut gw, gb);
        }
        grads
    }
}

/// Nearest coarsest-level vertex of every landmark on the reference mesh.
fn scatter_map(assets: &TopologyAssets) -> Result<(Vec<Option<usize>>, Vec<usize>)> {
    let reference = assets.reference_mesh()?.positions();
    let levels = assets.hierarchy.level_positions(&reference);
    let coarse = levels.last().expect("levels");
    let mut counts = vec![0; coarse.nrows()];
    let map = assets
        .topology
        .landmark_indices
        .iter()
        .map(|&li| {
            let p = reference.row(li);
            let best = (0..coarse.nrows()).min_by(|&a, &b| {
                let da: f64 = (&coarse.row(a) - &p).mapv(|v| v * v).sum();
                let db: f64 = (&coarse.row(b) - &p).mapv(|v| v * v).sum();
                da.total_cmp(&db)
            });
            if let Some(v) = best {
                counts[v] += 1;
            }
            best
        })
        .collect();
    Ok((map, counts))
}

/// `neutral + dense`, faces unchanged.
pub fn reconstruct_mesh(dense: &ArrayView2<f64>, neutral: &Mesh) -> Result<Mesh> {
    if dense.dim() != (neutral.vertex_count(), 3) {
        return Err(Error::Shape(format!(
            "{:?} displacement for a mesh with {} vertices",
            dense.dim(),
            neutral.vertex_count()
        )));
    }
    let vertices = neutral
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| [v[0] + dense[[i, 0]], v[1] + dense[[i, 1]], v[2] + dense[[i, 2]]])
        .collect();
    Mesh::new(vertices, neutral.faces.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;
    use crate::mesh::Topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assets() -> TopologyAssets {
        let m = icosphere(2, 50.0);
        let lm: Vec<usize> = (0..20).map(|i| i * 7).collect();
        let topo = Topology::new(162, m.faces.clone(), lm, (6..20).collect(), (11..20).collect()).unwrap();
        TopologyAssets::build(topo, &m, &[0.5; 5], 9, 1).unwrap()
    }

    fn small(lift: LiftMode) -> S2dConfig {
        S2dConfig {
            layer_channels: vec![8, 8, 4, 4, 4],
            lift_channels: 8,
            lift,
            landmark_count: 20,
            ..S2dConfig::default()
        }
    }

    fn input(seed: u64, b: usize) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((b, 20, 3), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn output_shape_and_zero_output_layer() {
        let a = assets();
        let m = S2dModel::new(small(LiftMode::Linear), &a).unwrap();
        let mut p = m.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let x = input(1, 1);
        let out = m.forward(&p, &x.index_axis(ndarray::Axis(0), 0)).unwrap();
        assert_eq!(out.dim(), (162, 3));
        m.zero_output_layer(&mut p);
        assert!(m.forward(&p, &x.index_axis(ndarray::Axis(0), 0)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permuted_landmarks_change_output() {
        let a = assets();
        for lift in [LiftMode::Linear, LiftMode::Scatter] {
            let m = S2dModel::new(small(lift), &a).unwrap();
            let p = m.init_params(&mut ChaCha8Rng::seed_from_u64(2));
            let x = input(3, 1);
            let mut y = x.clone();
            for j in 0..20 {
                y.slice_mut(ndarray::s![0, j, ..]).assign(&x.slice(ndarray::s![0, (j + 1) % 20, ..]));
            }
            let (o1, _) = m.forward_batch(&p, &x.view()).unwrap();
            let (o2, _) = m.forward_batch(&p, &y.view()).unwrap();
            assert_ne!(o1, o2);
        }
    }

    #[test]
    fn zero_input_zero_biases_is_zero() {
        let a = assets();
        let m = S2dModel::new(small(LiftMode::Linear), &a).unwrap();
        let mut p = m.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        let z = Array3::zeros((2, 20, 3));
        let (o, _) = m.forward_batch(&p, &z.view()).unwrap();
        assert!(o.iter().any(|&v| v != 0.0));
        m.zero_biases(&mut p);
        let (o, _) = m.forward_batch(&p, &z.view()).unwrap();
        assert!(o.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let a = assets();
        for lift in [LiftMode::Linear, LiftMode::Scatter] {
            let m = S2dModel::new(small(lift), &a).unwrap();
            let p = m.init_params(&mut ChaCha8Rng::seed_from_u64(7));
            let x = input(8, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let probe = Array3::from_shape_fn((2, 162, 3), |_| rng.random_range(-1.0..1.0));
            let f = |p: &[f64]| (m.forward_batch(p, &x.view()).unwrap().0 * &probe).sum();
            let (_, cache) = m.forward_batch(&p, &x.view()).unwrap();
            let g = m.backward(&p, &cache, &probe.view());
            let n = p.len();
            for k in (0..n).step_by(n / 41 + 1).chain([n - 1, n - 4]) {
                let mut hi = p.clone();
                hi[k] += 1e-6;
                let mut lo = p.clone();
                lo[k] -= 1e-6;
                let fd = (f(&hi) - f(&lo)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{lift:?} param {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn reconstruct_examples() {
        let n = icosphere(1, 10.0);
        let z = Array2::zeros((42, 3));
        assert_eq!(reconstruct_mesh(&z.view(), &n).unwrap(), n);
        let up = Array2::from_shape_fn((42, 3), |(_, c)| if c == 2 { 1.0 } else { 0.0 });
        let r = reconstruct_mesh(&up.view(), &n).unwrap();
        for (a, b) in r.vertices.iter().zip(&n.vertices) {
            assert_eq!(a[2], b[2] + 1.0);
        }
        assert!(reconstruct_mesh(&Array2::zeros((3, 3)).view(), &n).is_err());
    }

    #[test]
    fn rejects_mismatched_depth() {
        let a = assets();
        let cfg = S2dConfig {
            layer_channels: vec![4, 4],
            ..small(LiftMode::Linear)
        };
        assert!(S2dModel::new(cfg, &a).is_err());
    }
}
