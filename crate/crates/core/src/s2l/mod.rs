//! Speech-to-landmarks regression: a stacked bidirectional LSTM over audio
//! feature frames followed by a per-frame linear head producing `L x 3`
//! landmark displacements.

pub mod loss;

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmWeights};
use crate::nn::{linear, linear_backward, ParamId, ParamLayout};
use crate::{Error, Result};

pub use loss::{
    loss_cos, loss_cos_grad, loss_cos_with, loss_mouth, loss_mouth_grad, loss_rec, loss_rec_grad, loss_s2l_total,
    loss_s2l_total_grad, loss_vel, loss_vel_grad, CosineMode, S2lLossBreakdown, S2lLossWeights, S2lObjective,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S2lConfig {
    pub lstm_layers: usize,
    pub hidden_size: usize,
    pub bidirectional: bool,
    pub input_channels: usize,
    pub landmark_count: usize,
    /// Landmarks entering the mouth/jaw term.
    pub mouth_jaw_indices: Vec<usize>,
    #[serde(flatten)]
    pub weights: S2lLossWeights,
    pub cos_eps: f64,
    pub cos_mode: CosineMode,
    /// Half-width of the uniform init of the output head.
    pub head_init: f64,
}

impl Default for S2lConfig {
    fn default() -> Self {
        S2lConfig {
            lstm_layers: 3,
            hidden_size: 64,
            bidirectional: true,
            input_channels: 768,
            landmark_count: 68,
            mouth_jaw_indices: crate::mesh::ibug68_mouth_jaw(),
            weights: S2lLossWeights::default(),
            cos_eps: 1e-8,
            cos_mode: CosineMode::Flattened,
            head_init: 1e-2,
        }
    }
}

impl S2lConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lstm_layers == 0 || self.hidden_size == 0 || self.input_channels == 0 || self.landmark_count == 0 {
            return Err(Error::Config("s2l layer sizes must be positive".into()));
        }
        self.weights.validate()?;
        if !(self.cos_eps > 0.0) {
            return Err(Error::Config("cos_eps must be positive".into()));
        }
        if self.mouth_jaw_indices.is_empty() || self.mouth_jaw_indices.iter().any(|&i| i >= self.landmark_count) {
            return Err(Error::Config("mouth_jaw_indices must be a non-empty subset of the landmarks".into()));
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn objective(&self) -> S2lObjective<'_> {
        S2lObjective {
            weights: self.weights,
            mouth_jaw: &self.mouth_jaw_indices,
            cos_eps: self.cos_eps,
            cos_mode: self.cos_mode,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct DirectionIds {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct S2lModel {
    pub config: S2lConfig,
    pub layout: ParamLayout,
    layers: Vec<Vec<DirectionIds>>,
    head_w: ParamId,
    head_b: ParamId,
}

/// Forward activations of one batch of equal-length sequences.
pub struct S2lCache {
    steps: usize,
    batch: usize,
    inputs: Vec<Array2<f64>>,
    lstm: Vec<Vec<LstmCache>>,
    top: Array2<f64>,
}

impl S2lModel {
    pub fn new(config: S2lConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        let dirs = config.directions();
        let mut layout = ParamLayout::new();
        let mut layers = Vec::new();
        for layer in 0..config.lstm_layers {
            let cin = if layer == 0 { config.input_channels } else { dirs * h };
            let ids = (0..dirs)
                .map(|d| {
                    let suffix = if d == 1 { "_reverse" } else { "" };
                    DirectionIds {
                        w_ih: layout.add(format!("lstm.weight_ih_l{layer}{suffix}"), &[4 * h, cin]),
                        w_hh: layout.add(format!("lstm.weight_hh_l{layer}{suffix}"), &[4 * h, h]),
                        bias: layout.add(format!("lstm.bias_l{layer}{suffix}"), &[4 * h]),
                    }
                })
                .collect();
            layers.push(ids);
        }
        let out = 3 * config.landmark_count;
        let head_w = layout.add("head.weight", &[out, dirs * h]);
        let head_b = layout.add("head.bias", &[out]);
        Ok(S2lModel {
            config,
            layout,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// LSTM weights uniform in `±1/sqrt(H)`, head weights uniform in
    /// `±head_init`, head bias zero.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.layout.total()];
        let k = 1.0 / (self.config.hidden_size as f64).sqrt();
        for dirs in &self.layers {
            for d in dirs {
                for id in [d.w_ih, d.w_hh, d.bias] {
                    self.layout.fill_uniform(&mut p, id, k, rng);
                }
            }
        }
        if self.config.head_init > 0.0 {
            self.layout.fill_uniform(&mut p, self.head_w, self.config.head_init, rng);
        }
        p
    }

    /// Sets the output head to zero, making every prediction zero.
    pub fn zero_head(&self, params: &mut [f64]) {
        self.layout.slice_mut(params, self.head_w).fill(0.0);
        self.layout.slice_mut(params, self.head_b).fill(0.0);
    }

    fn dir_weights<'a>(&self, params: &'a [f64], d: &DirectionIds) -> LstmWeights<'a> {
        LstmWeights {
            w_ih: self.layout.mat(params, d.w_ih),
            w_hh: self.layout.mat(params, d.w_hh),
            bias: self.layout.slice(params, d.bias),
        }
    }

    pub fn forward(&self, params: &[f64], features: &ArrayView2<f64>) -> Result<Array3<f64>> {
        let (mut out, _) = self.forward_batch(params, &[features.view()])?;
        Ok(out.pop().expect("one sequence"))
    }

    /// Runs a batch of sequences that all have the same number of frames.
    pub fn forward_batch(&self, params: &[f64], seqs: &[ArrayView2<f64>]) -> Result<(Vec<Array3<f64>>, S2lCache)> {
        if params.len() != self.layout.total() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.layout.total(), params.len())));
        }
        let batch = seqs.len();
        let steps = seqs.first().map_or(0, |s| s.nrows());
        if batch == 0 || steps == 0 {
            return Err(Error::Shape("s2l input needs at least one frame".into()));
        }
        let c = self.config.input_channels;
        let mut x = Array2::zeros((steps * batch, c));
        for (b, sq) in seqs.iter().enumerate() {
            if sq.ncols() != c {
                return Err(Error::Shape(format!("features have {} channels, model expects {c}", sq.ncols())));
            }
            if sq.nrows() != steps {
                return Err(Error::Shape("sequences in a batch must have equal length".into()));
            }
            for t in 0..steps {
                x.row_mut(t * batch + b).assign(&sq.row(t));
            }
        }
        let h = self.config.hidden_size;
        let dirs = self.config.directions();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for ids in &self.layers {
            let mut next = Array2::zeros((steps * batch, dirs * h));
            let mut layer_caches = Vec::with_capacity(dirs);
            for (d, dir) in ids.iter().enumerate() {
                let cache = lstm_forward(&x.view(), steps, batch, self.dir_weights(params, dir), d == 1);
                next.slice_mut(s![.., d * h..(d + 1) * h]).assign(&cache.h);
                layer_caches.push(cache);
            }
            inputs.push(std::mem::replace(&mut x, next));
            caches.push(layer_caches);
        }
        let y = linear(&x.view(), &self.layout.mat(params, self.head_w), self.layout.slice(params, self.head_b));
        let l = self.config.landmark_count;
        let outs = (0..batch)
            .map(|b| Array3::from_shape_fn((steps, l, 3), |(t, j, k)| y[[t * batch + b, 3 * j + k]]))
            .collect();
        Ok((
            outs,
            S2lCache {
                steps,
                batch,
                inputs,
                lstm: caches,
                top: x,
            },
        ))
    }

    /// Parameter gradient given the gradient w.r.t. each output sequence.
    pub fn backward(&self, params: &[f64], cache: &S2lCache, d_out: &[Array3<f64>]) -> Vec<f64> {
        let (steps, batch) = (cache.steps, cache.batch);
        let l = self.config.landmark_count;
        let mut dy = Array2::zeros((steps * batch, 3 * l));
        for (b, g) in d_out.iter().enumerate() {
            for t in 0..steps {
                for j in 0..l {
                    for k in 0..3 {
                        dy[[t * batch + b, 3 * j + k]] = g[[t, j, k]];
                    }
                }
            }
        }
        let mut grads = vec![0.0; self.layout.total()];
        let mut d = {
            let [gw, gb] = self.layout.slices_mut(&mut grads, [self.head_w, self.head_b]);
            let (r, c) = self.layout.dims2(self.head_w);
            let mut gw = ndarray::ArrayViewMut2::from_shape((r, c), gw).expect("shape");
            linear_backward(&cache.top.view(), &self.layout.mat(params, self.head_w), &dy.view(), &mut gw, gb)
        };
        let h = self.config.hidden_size;
        for (li, ids) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[li];
            let mut dx = Array2::zeros(x.dim());
            for (di, dir) in ids.iter().enumerate() {
                let dh = d.slice(s![.., di * h..(di + 1) * h]);
                let (r_ih, c_ih) = self.layout.dims2(dir.w_ih);
                let [gih, ghh, gb] = self.layout.slices_mut(&mut grads, [dir.w_ih, dir.w_hh, dir.bias]);
                let g = LstmGrads {
                    w_ih: ndarray::ArrayViewMut2::from_shape((r_ih, c_ih), gih).expect("shape"),
                    w_hh: ndarray::ArrayViewMut2::from_shape((4 * h, h), ghh).expect("shape"),
                    bias: gb,
                };
                dx += &lstm_backward(&x.view(), &cache.lstm[li][di], &dh, self.dir_weights(params, dir), g);
            }
            d = dx;
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> S2lConfig {
        S2lConfig {
            lstm_layers: 2,
            hidden_size: 4,
            input_channels: 3,
            landmark_count: 2,
            mouth_jaw_indices: vec![1],
            head_init: 0.3,
            ..S2lConfig::default()
        }
    }

    fn features(t: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, 3), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn shapes_and_zero_head() {
        let m = S2lModel::new(small()).unwrap();
        let mut p = m.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.forward(&p, &features(1, 1).view()).unwrap().dim(), (1, 2, 3));
        assert_eq!(m.forward(&p, &features(7, 1).view()).unwrap().dim(), (7, 2, 3));
        m.zero_head(&mut p);
        assert!(m.forward(&p, &features(5, 2).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(m.forward(&p, &Array2::zeros((3, 4)).view()).is_err());
    }

    #[test]
    fn seeds_change_output() {
        let m = S2lModel::new(small()).unwrap();
        let a = m.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let b = m.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        let x = features(4, 3);
        assert_ne!(m.forward(&a, &x.view()).unwrap(), m.forward(&b, &x.view()).unwrap());
    }

    #[test]
    fn batch_equals_individual() {
        let m = S2lModel::new(small()).unwrap();
        let p = m.init_params(&mut ChaCha8Rng::seed_from_u64(4));
        let (x1, x2) = (features(5, 1), features(5, 2));
        let (out, _) = m.forward_batch(&p, &[x1.view(), x2.view()]).unwrap();
        let single = m.forward(&p, &x2.view()).unwrap();
        assert!((&out[1] - &single).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = S2lModel::new(small()).unwrap();
        let p = m.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        let xs = [features(4, 7), features(4, 8)];
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let probe: Vec<Array3<f64>> = (0..2).map(|_| Array3::from_shape_fn((4, 2, 3), |_| rng.random_range(-1.0..1.0))).collect();
        let f = |p: &[f64]| -> f64 {
            let (o, _) = m.forward_batch(p, &views).unwrap();
            o.iter().zip(&probe).map(|(a, b)| (a * b).sum()).sum()
        };
        let (_, cache) = m.forward_batch(&p, &views).unwrap();
        let g = m.backward(&p, &cache, &probe);
        let n = p.len();
        for k in (0..n).step_by(n / 37 + 1).chain([n - 1, n - 7]) {
            let mut a = p.clone();
            a[k] += 1e-6;
            let mut b = p.clone();
            b[k] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6, "param {k}: fd {fd} vs {}", g[k]);
        }
    }
}
