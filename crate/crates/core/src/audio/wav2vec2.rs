//! Inference-only Wav2Vec 2.0 encoder reading Hugging Face checkpoints
//! (`config.json` + `model.safetensors`).

use std::collections::HashMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::SpeechEncoder;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Wav2Vec2Config {
    pub conv_dim: Vec<usize>,
    pub conv_kernel: Vec<usize>,
    pub conv_stride: Vec<usize>,
    pub conv_bias: bool,
    pub feat_extract_norm: String,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub num_conv_pos_embeddings: usize,
    pub num_conv_pos_embedding_groups: usize,
    pub do_stable_layer_norm: bool,
    pub layer_norm_eps: f64,
}

impl Default for Wav2Vec2Config {
    fn default() -> Self {
        Wav2Vec2Config {
            conv_dim: vec![512; 7],
            conv_kernel: vec![10, 3, 3, 3, 3, 2, 2],
            conv_stride: vec![5, 2, 2, 2, 2, 2, 2],
            conv_bias: false,
            feat_extract_norm: "group".into(),
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            num_conv_pos_embeddings: 128,
            num_conv_pos_embedding_groups: 16,
            do_stable_layer_norm: false,
            layer_norm_eps: 1e-5,
        }
    }
}

impl Wav2Vec2Config {
    fn validate(&self) -> Result<()> {
        let n = self.conv_dim.len();
        if n == 0 || self.conv_kernel.len() != n || self.conv_stride.len() != n {
            return Err(Error::Config("conv_dim, conv_kernel and conv_stride must have equal non-zero length".into()));
        }
        if self.conv_kernel.contains(&0) || self.conv_stride.contains(&0) || self.conv_dim.contains(&0) {
            return Err(Error::Config("conv sizes must be positive".into()));
        }
        if self.feat_extract_norm != "group" && self.feat_extract_norm != "layer" {
            return Err(Error::Config(format!("unknown feat_extract_norm {}", self.feat_extract_norm)));
        }
        let groups = self.num_conv_pos_embedding_groups;
        if self.hidden_size == 0
            || self.num_attention_heads == 0
            || self.hidden_size % self.num_attention_heads != 0
            || groups == 0
            || self.hidden_size % groups != 0
            || self.num_conv_pos_embeddings == 0
        {
            return Err(Error::Config("hidden size must divide into heads and positional groups".into()));
        }
        Ok(())
    }

    /// Number of output frames for `samples` input samples.
    pub fn output_frames(&self, samples: usize) -> usize {
        let mut len = samples;
        for (&k, &st) in self.conv_kernel.iter().zip(&self.conv_stride) {
            if len < k {
                return 0;
            }
            len = (len - k) / st + 1;
        }
        len
    }

    pub fn receptive_field(&self) -> usize {
        let mut rf = 1;
        for (&k, &st) in self.conv_kernel.iter().zip(&self.conv_stride).rev() {
            rf = (rf - 1) * st + k;
        }
        rf
    }

    pub fn total_stride(&self) -> usize {
        self.conv_stride.iter().product()
    }
}

/// Raw tensors keyed by name, converted to `f32`.
pub struct TensorStore {
    tensors: HashMap<String, (Vec<usize>, Vec<f32>)>,
}

impl TensorStore {
    pub fn from_safetensors(bytes: &[u8]) -> Result<Self> {
        let st = safetensors::SafeTensors::deserialize(bytes).map_err(|e| Error::parse("safetensors", e.to_string()))?;
        let mut tensors = HashMap::new();
        for (name, view) in st.tensors() {
            let data = view.data();
            let values: Vec<f32> = match view.dtype() {
                safetensors::Dtype::F32 => data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
                safetensors::Dtype::F64 => data
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
                    .collect(),
                safetensors::Dtype::F16 => data
                    .chunks_exact(2)
                    .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
                    .collect(),
                safetensors::Dtype::BF16 => data
                    .chunks_exact(2)
                    .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
                    .collect(),
                other => {
                    log::debug!("skipping tensor {name} with dtype {other:?}");
                    continue;
                }
            };
            let name = name.strip_prefix("wav2vec2.").unwrap_or(&name).to_string();
            tensors.insert(name, (view.shape().to_vec(), values));
        }
        Ok(TensorStore { tensors })
    }

    fn get(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let (s, v) = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing encoder tensor {name}")))?;
        if s != shape {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {s:?}, expected {shape:?}")));
        }
        Ok(v)
    }

    fn has(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    fn mat(&self, name: &str, r: usize, c: usize) -> Result<Array2<f32>> {
        Ok(Array2::from_shape_vec((r, c), self.get(name, &[r, c])?.to_vec()).expect("shape"))
    }

    fn vec(&self, name: &str, n: usize) -> Result<Array1<f32>> {
        Ok(Array1::from(self.get(name, &[n])?.to_vec()))
    }
}

struct Norm {
    weight: Array1<f32>,
    bias: Array1<f32>,
}

struct Dense {
    w: Array2<f32>,
    b: Array1<f32>,
}

impl Dense {
    fn load(st: &TensorStore, prefix: &str, out: usize, inp: usize) -> Result<Self> {
        Ok(Dense {
            w: st.mat(&format!("{prefix}.weight"), out, inp)?,
            b: st.vec(&format!("{prefix}.bias"), out)?,
        })
    }

    fn apply(&self, x: &ArrayView2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }
}

impl Norm {
    fn load(st: &TensorStore, prefix: &str, n: usize) -> Result<Self> {
        Ok(Norm {
            weight: st.vec(&format!("{prefix}.weight"), n)?,
            bias: st.vec(&format!("{prefix}.bias"), n)?,
        })
    }

    /// Normalizes each row over its columns.
    fn rows(&self, x: &mut Array2<f32>, eps: f32) {
        for mut row in x.rows_mut() {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.weight[j] + self.bias[j];
            }
        }
    }
}

struct ConvLayer {
    w: Array2<f32>,
    bias: Option<Array1<f32>>,
    kernel: usize,
    stride: usize,
    group_norm: Option<Norm>,
    layer_norm: Option<Norm>,
}

struct EncoderLayer {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    ln_attn: Norm,
    ff_in: Dense,
    ff_out: Dense,
    ln_ff: Norm,
}

pub struct Wav2Vec2Encoder {
    config: Wav2Vec2Config,
    convs: Vec<ConvLayer>,
    fp_norm: Norm,
    fp_proj: Dense,
    pos_w: Vec<f32>,
    pos_b: Array1<f32>,
    enc_norm: Norm,
    layers: Vec<EncoderLayer>,
    output_layers: usize,
    normalize: bool,
}

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x / std::f32::consts::SQRT_2))
}

impl Wav2Vec2Encoder {
    /// Loads `config.json` and `model.safetensors` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.json");
        let cfg_bytes = std::fs::read(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: Wav2Vec2Config =
            serde_json::from_slice(&cfg_bytes).map_err(|e| Error::parse("encoder config", e.to_string()))?;
        let w_path = dir.join("model.safetensors");
        let bytes = std::fs::read(&w_path).map_err(|e| Error::io(&w_path, e))?;
        Self::from_parts(config, &TensorStore::from_safetensors(&bytes)?)
    }

    pub fn from_parts(config: Wav2Vec2Config, st: &TensorStore) -> Result<Self> {
        config.validate()?;
        let eps_layer = config.feat_extract_norm == "layer";
        let mut convs = Vec::new();
        let mut cin = 1;
        for (i, ((&cout, &k), &stride)) in config.conv_dim.iter().zip(&config.conv_kernel).zip(&config.conv_stride).enumerate() {
            let p = format!("feature_extractor.conv_layers.{i}");
            let w = st.get(&format!("{p}.conv.weight"), &[cout, cin, k])?.to_vec();
            let bias = if config.conv_bias {
                Some(st.vec(&format!("{p}.conv.bias"), cout)?)
            } else {
                None
            };
            let (group_norm, layer_norm) = match (eps_layer, i) {
                (true, _) => (None, Some(Norm::load(st, &format!("{p}.layer_norm"), cout)?)),
                (false, 0) => (Some(Norm::load(st, &format!("{p}.layer_norm"), cout)?), None),
                _ => (None, None),
            };
            convs.push(ConvLayer {
                w: Array2::from_shape_vec((cout, cin * k), w).expect("shape"),
                bias,
                kernel: k,
                stride,
                group_norm,
                layer_norm,
            });
            cin = cout;
        }
        let h = config.hidden_size;
        let fp_norm = Norm::load(st, "feature_projection.layer_norm", cin)?;
        let fp_proj = Dense::load(st, "feature_projection.projection", h, cin)?;
        let kpos = config.num_conv_pos_embeddings;
        let gsz = h / config.num_conv_pos_embedding_groups;
        let pos_w = pos_conv_weight(st, h, gsz, kpos)?;
        let pos_b = st.vec("encoder.pos_conv_embed.conv.bias", h)?;
        let enc_norm = Norm::load(st, "encoder.layer_norm", h)?;
        let layers = (0..config.num_hidden_layers)
            .map(|i| {
                let p = format!("encoder.layers.{i}");
                Ok(EncoderLayer {
                    q: Dense::load(st, &format!("{p}.attention.q_proj"), h, h)?,
                    k: Dense::load(st, &format!("{p}.attention.k_proj"), h, h)?,
                    v: Dense::load(st, &format!("{p}.attention.v_proj"), h, h)?,
                    o: Dense::load(st, &format!("{p}.attention.out_proj"), h, h)?,
                    ln_attn: Norm::load(st, &format!("{p}.layer_norm"), h)?,
                    ff_in: Dense::load(st, &format!("{p}.feed_forward.intermediate_dense"), config.intermediate_size, h)?,
                    ff_out: Dense::load(st, &format!("{p}.feed_forward.output_dense"), h, config.intermediate_size)?,
                    ln_ff: Norm::load(st, &format!("{p}.final_layer_norm"), h)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Wav2Vec2Encoder {
            output_layers: config.num_hidden_layers,
            config,
            convs,
            fp_norm,
            fp_proj,
            pos_w,
            pos_b,
            enc_norm,
            layers,
            normalize: true,
        })
    }

    pub fn config(&self) -> &Wav2Vec2Config {
        &self.config
    }

    /// Stops after `layer` transformer layers (`None` runs all of them).
    pub fn set_output_layer(&mut self, layer: Option<usize>) -> Result<()> {
        let n = self.config.num_hidden_layers;
        match layer {
            Some(l) if l > n => Err(Error::Config(format!("encoder has {n} layers, requested {l}"))),
            Some(l) => {
                self.output_layers = l;
                Ok(())
            }
            None => {
                self.output_layers = n;
                Ok(())
            }
        }
    }

    /// Zero-mean, unit-variance input normalization.
    pub fn set_normalize(&mut self, on: bool) {
        self.normalize = on;
    }

    fn conv_stack(&self, wave: &[f32]) -> Array2<f32> {
        let eps = self.config.layer_norm_eps as f32;
        let mut x = Array2::from_shape_vec((1, wave.len()), wave.to_vec()).expect("shape");
        for layer in &self.convs {
            let (cin, len) = x.dim();
            let out_len = (len - layer.kernel) / layer.stride + 1;
            let mut cols = Array2::<f32>::zeros((cin * layer.kernel, out_len));
            for c in 0..cin {
                let xr = x.row(c);
                for k in 0..layer.kernel {
                    let mut dst = cols.row_mut(c * layer.kernel + k);
                    for t in 0..out_len {
                        dst[t] = xr[t * layer.stride + k];
                    }
                }
            }
            let mut y = layer.w.dot(&cols);
            if let Some(b) = &layer.bias {
                for (mut row, bv) in y.rows_mut().into_iter().zip(b) {
                    row += *bv;
                }
            }
            if let Some(gn) = &layer.group_norm {
                gn_channels(&mut y, gn, eps);
            }
            if let Some(ln) = &layer.layer_norm {
                let mut t = y.t().to_owned();
                ln.rows(&mut t, eps);
                y = t.t().to_owned();
            }
            y.mapv_inplace(gelu);
            x = y;
        }
        x
    }

    fn positional(&self, x: &Array2<f32>) -> Array2<f32> {
        let (len, h) = x.dim();
        let k = self.config.num_conv_pos_embeddings;
        let groups = self.config.num_conv_pos_embedding_groups;
        let gsz = h / groups;
        let pad = k / 2;
        let xt = x.t();
        let mut out = Array2::<f32>::zeros((len, h));
        let mut cols = Array2::<f32>::zeros((gsz * k, len));
        for g in 0..groups {
            cols.fill(0.0);
            for ci in 0..gsz {
                let src = xt.row(g * gsz + ci);
                for kk in 0..k {
                    let mut dst = cols.row_mut(ci * k + kk);
                    for t in 0..len {
                        let idx = t as isize + kk as isize - pad as isize;
                        if idx >= 0 && (idx as usize) < len {
                            dst[t] = src[idx as usize];
                        }
                    }
                }
            }
            let wg = ArrayView2::from_shape((gsz, gsz * k), &self.pos_w[g * gsz * gsz * k..(g + 1) * gsz * gsz * k]).expect("shape");
            let y = wg.dot(&cols);
            for co in 0..gsz {
                let o = g * gsz + co;
                for t in 0..len {
                    out[[t, o]] = gelu(y[[co, t]] + self.pos_b[o]);
                }
            }
        }
        out
    }

    fn attention(&self, layer: &EncoderLayer, x: &ArrayView2<f32>) -> Array2<f32> {
        let (len, h) = x.dim();
        let heads = self.config.num_attention_heads;
        let hd = h / heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let q = layer.q.apply(x) * scale;
        let k = layer.k.apply(x);
        let v = layer.v.apply(x);
        let mut ctx = Array2::<f32>::zeros((len, h));
        for hh in 0..heads {
            let cs = s![.., hh * hd..(hh + 1) * hd];
            let mut scores = q.slice(cs).dot(&k.slice(cs).t());
            for mut row in scores.rows_mut() {
                let m = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - m).exp());
                let z = row.sum();
                row /= z;
            }
            ctx.slice_mut(cs).assign(&scores.dot(&v.slice(cs)));
        }
        layer.o.apply(&ctx.view())
    }

    fn feed_forward(layer: &EncoderLayer, x: &ArrayView2<f32>) -> Array2<f32> {
        let mut hdn = layer.ff_in.apply(x);
        hdn.mapv_inplace(gelu);
        layer.ff_out.apply(&hdn.view())
    }

    /// Hidden states after the configured number of layers, `T x H`.
    pub fn forward(&self, wave: &[f32]) -> Result<Array2<f32>> {
        let eps = self.config.layer_norm_eps as f32;
        let rf = self.config.receptive_field();
        let mut input: Vec<f32> = wave.to_vec();
        if input.len() < rf {
            input.resize(rf, 0.0);
        }
        if self.normalize {
            let n = input.len() as f32;
            let mean = input.iter().sum::<f32>() / n;
            let var = input.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + 1e-7).sqrt();
            input.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        let feats = self.conv_stack(&input);
        let mut x = feats.t().to_owned();
        self.fp_norm.rows(&mut x, eps);
        let mut hs = self.fp_proj.apply(&x.view());
        hs += &self.positional(&hs);
        let stable = self.config.do_stable_layer_norm;
        if !stable {
            self.enc_norm.rows(&mut hs, eps);
        }
        for layer in &self.layers[..self.output_layers] {
            if stable {
                let mut n = hs.clone();
                layer.ln_attn.rows(&mut n, eps);
                hs += &self.attention(layer, &n.view());
                let mut n = hs.clone();
                layer.ln_ff.rows(&mut n, eps);
                hs += &Self::feed_forward(layer, &n.view());
            } else {
                hs += &self.attention(layer, &hs.view());
                layer.ln_attn.rows(&mut hs, eps);
                hs += &Self::feed_forward(layer, &hs.view());
                layer.ln_ff.rows(&mut hs, eps);
            }
        }
        if stable && self.output_layers == self.config.num_hidden_layers {
            self.enc_norm.rows(&mut hs, eps);
        }
        Ok(hs)
    }
}

/// Per-channel normalization over time (group norm with one channel per
/// group).
fn gn_channels(y: &mut Array2<f32>, norm: &Norm, eps: f32) {
    for (c, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.len() as f32;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv * norm.weight[c] + norm.bias[c]);
    }
}

/// Positional conv kernel `H x (H/G) x K`, resolving weight normalization
/// (`weight_g`/`weight_v` or the parametrization naming) when present.
fn pos_conv_weight(st: &TensorStore, h: usize, gsz: usize, k: usize) -> Result<Vec<f32>> {
    let base = "encoder.pos_conv_embed.conv";
    if st.has(&format!("{base}.weight")) {
        return Ok(st.get(&format!("{base}.weight"), &[h, gsz, k])?.to_vec());
    }
    let (gname, vname) = if st.has(&format!("{base}.weight_g")) {
        (format!("{base}.weight_g"), format!("{base}.weight_v"))
    } else {
        (
            format!("{base}.parametrizations.weight.original0"),
            format!("{base}.parametrizations.weight.original1"),
        )
    };
    let g = st.get(&gname, &[1, 1, k])?;
    let v = st.get(&vname, &[h, gsz, k])?;
    let mut norms = vec![0.0f32; k];
    for (idx, val) in v.iter().enumerate() {
        norms[idx % k] += val * val;
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt().max(1e-12));
    Ok(v.iter().enumerate().map(|(idx, val)| g[idx % k] * val / norms[idx % k]).collect())
}

impl SpeechEncoder for Wav2Vec2Encoder {
    fn name(&self) -> &str {
        "pretrained"
    }

    fn channels(&self) -> usize {
        self.config.hidden_size
    }

    fn native_frame_rate(&self) -> f64 {
        super::ENCODER_SAMPLE_RATE as f64 / self.config.total_stride() as f64
    }

    fn encode_16k(&self, wave: &[f32]) -> Result<Array2<f64>> {
        Ok(self.forward(wave)?.mapv(f64::from))
    }
}
