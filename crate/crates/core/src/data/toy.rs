//! Synthetic talking-head corpus on an icosphere "face".
//!
//! The audio of each sentence is the sum of a harmonic voiced component and
//! a high-passed noise component with piecewise envelopes. Jaw opening
//! follows the voiced RMS and lip spread follows the noise RMS around each
//! frame, so the motion is a deterministic function of the audio. Both
//! motions are smooth compactly supported vector fields on the sphere;
//! landmark motion is the field sampled at the landmark vertices.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Neutrals, TalkingSequence};
use crate::audio::Waveform;
use crate::mesh::primitives::icosphere;
use crate::mesh::{Mesh, Topology};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub n_subjects: usize,
    pub n_sentences: usize,
    pub fps: f64,
    /// Seconds per sentence.
    pub duration: f64,
    pub sample_rate: u32,
    pub subdivisions: usize,
    pub radius: f64,
    /// Audio gain; zero yields silent audio and static neutral frames.
    pub amplitude: f64,
    /// Peak jaw displacement in millimetres at unit envelope.
    pub motion_scale: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_subjects: 3,
            n_sentences: 1,
            fps: 60.0,
            duration: 0.5,
            sample_rate: 16000,
            subdivisions: 3,
            radius: 50.0,
            amplitude: 1.0,
            motion_scale: 4.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub topology: Topology,
    pub reference: Mesh,
    pub neutrals: Neutrals,
    pub sequences: Vec<TalkingSequence>,
}

const UPPER: [[f64; 3]; 6] = [
    [-0.35, 0.35, 0.87],
    [0.35, 0.35, 0.87],
    [-0.45, 0.55, 0.7],
    [0.45, 0.55, 0.7],
    [0.0, 0.3, 0.95],
    [0.0, 0.05, 1.0],
];
const JAW: [[f64; 3]; 5] = [
    [-0.65, -0.45, 0.6],
    [-0.38, -0.7, 0.6],
    [0.0, -0.8, 0.6],
    [0.38, -0.7, 0.6],
    [0.65, -0.45, 0.6],
];
const LIPS: [[f64; 3]; 9] = [
    [-0.3, -0.35, 0.9],
    [-0.15, -0.24, 0.95],
    [0.0, -0.22, 0.97],
    [0.15, -0.24, 0.95],
    [0.3, -0.35, 0.9],
    [0.15, -0.47, 0.87],
    [0.0, -0.5, 0.86],
    [-0.15, -0.47, 0.87],
    [0.0, -0.36, 0.93],
];

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn wendland(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - r).powi(4) * (4.0 * r + 1.0)
    }
}

/// 20-landmark topology: 0–5 upper face, 6–10 jaw, 11–19 lips. Mouth/jaw
/// covers 6..20 and the lips 11..20.
pub fn toy_topology(mesh: &Mesh) -> Result<Topology> {
    let dirs: Vec<[f64; 3]> = mesh.vertices.iter().map(|&v| unit(v)).collect();
    let mut used = vec![false; dirs.len()];
    let mut landmarks = Vec::new();
    for target in UPPER.iter().chain(&JAW).chain(&LIPS) {
        let t = unit(*target);
        let best = (0..dirs.len())
            .filter(|&i| !used[i])
            .min_by(|&a, &b| dist(dirs[a], t).total_cmp(&dist(dirs[b], t)))
            .ok_or_else(|| Error::InvalidTopology("mesh too small for the toy landmarks".into()))?;
        used[best] = true;
        landmarks.push(best);
    }
    Topology::new(mesh.vertex_count(), mesh.faces.clone(), landmarks, (6..20).collect(), (11..20).collect())
}

/// Jaw and spread basis fields over the reference directions.
fn motion_basis(mesh: &Mesh, scale: f64) -> (Array2<f64>, Array2<f64>) {
    let jaw_c = unit([0.0, -0.6, 0.8]);
    let mouth_c = unit([0.0, -0.35, 0.94]);
    let m = mesh.vertex_count();
    let mut jaw = Array2::zeros((m, 3));
    let mut spread = Array2::zeros((m, 3));
    for (i, v) in mesh.vertices.iter().enumerate() {
        let u = unit(*v);
        let wj = wendland(dist(u, jaw_c) / 0.75);
        jaw[[i, 1]] = -scale * wj;
        jaw[[i, 2]] = 0.3 * scale * wj;
        let ws = wendland(dist(u, mouth_c) / 0.5);
        let side = (u[0] / 0.3).clamp(-1.0, 1.0);
        spread[[i, 0]] = 0.5 * scale * ws * side;
        spread[[i, 2]] = -0.2 * scale * ws * (1.0 - side.abs());
    }
    (jaw, spread)
}

struct Voice {
    f0: f64,
    gain: f64,
}

/// Voiced and noise components of one sentence.
fn synthesize(n: usize, sr: u32, voice: &Voice, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let srf = sr as f64;
    let mut env_v = vec![0.0; n];
    let mut env_n = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let len = ((rng.random_range(0.06..0.16) * srf) as usize).max(1);
        let level = rng.random_range(0.4..1.0);
        let kind: f64 = rng.random();
        let end = (pos + len).min(n);
        for i in pos..end {
            if kind < 0.5 {
                env_v[i] = level;
            } else if kind < 0.75 {
                env_n[i] = level;
            }
        }
        pos = end;
    }
    let smooth = |e: &[f64]| -> Vec<f64> {
        let w = (0.02 * srf) as usize;
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + e[i];
        }
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(w / 2);
                let hi = (i + w / 2 + 1).min(n);
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            })
            .collect()
    };
    let env_v = smooth(&env_v);
    let env_n = smooth(&env_n);
    let phases: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let mut prev = 0.0;
    let mut voiced = vec![0.0; n];
    let mut noise = vec![0.0; n];
    for i in 0..n {
        let t = i as f64 / srf;
        let harm: f64 = (1..=5)
            .map(|h| (std::f64::consts::TAU * h as f64 * voice.f0 * t + phases[h - 1]).sin() / h as f64)
            .sum();
        voiced[i] = 0.25 * voice.gain * env_v[i] * harm;
        let w: f64 = rng.random_range(-1.0..1.0);
        noise[i] = 0.25 * voice.gain * env_n[i] * (w - prev) * 0.5;
        prev = w;
    }
    (voiced, noise)
}

fn windowed_rms(x: &[f64], centre: usize, half: usize) -> f64 {
    let lo = centre.saturating_sub(half);
    let hi = (centre + half).min(x.len());
    if hi <= lo {
        return 0.0;
    }
    (x[lo..hi].iter().map(|v| v * v).sum::<f64>() / (2 * half) as f64).sqrt()
}

pub fn generate_toy_dataset(cfg: &ToyConfig) -> Result<ToyDataset> {
    if cfg.n_subjects == 0 || cfg.n_sentences == 0 || !(cfg.fps > 0.0) || !(cfg.duration > 0.0) || cfg.sample_rate == 0 {
        return Err(Error::Config("toy dataset needs subjects, sentences, fps, duration and sample rate".into()));
    }
    let reference = icosphere(cfg.subdivisions, cfg.radius);
    let topology = toy_topology(&reference)?;
    let (jaw, spread) = motion_basis(&reference, cfg.motion_scale);
    let k = ((cfg.duration * cfg.fps).round() as usize).max(1);
    let n = (cfg.duration * cfg.sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut neutrals = Neutrals::new();
    let mut sequences = Vec::new();
    let base = reference.positions();
    for s in 0..cfg.n_subjects {
        let subject = format!("toy{s:02}");
        let scale: Vec<f64> = (0..3).map(|_| 1.0 + rng.random_range(-0.08..0.08)).collect();
        let neutral = Array2::from_shape_fn(base.dim(), |(i, c)| base[[i, c]] * scale[c]);
        let voice = Voice {
            f0: rng.random_range(100.0..220.0),
            gain: rng.random_range(0.6..1.0),
        };
        for sentence in 0..cfg.n_sentences {
            let (voiced, noise) = synthesize(n, cfg.sample_rate, &voice, &mut rng);
            let samples = voiced
                .iter()
                .zip(&noise)
                .map(|(a, b)| (cfg.amplitude * (a + b)) as f32)
                .collect();
            let mut frames = Array3::zeros((k, base.nrows(), 3));
            for t in 0..k {
                let centre = (t as f64 * cfg.sample_rate as f64 / cfg.fps).round() as usize;
                let a = cfg.amplitude * windowed_rms(&voiced, centre, 256) / 0.12;
                let b = cfg.amplitude * windowed_rms(&noise, centre, 256) / 0.06;
                let mut f = frames.index_axis_mut(ndarray::Axis(0), t);
                f.assign(&neutral);
                if a != 0.0 {
                    f.scaled_add(a, &jaw);
                }
                if b != 0.0 {
                    f.scaled_add(b, &spread);
                }
            }
            sequences.push(TalkingSequence {
                audio: Waveform {
                    samples,
                    sample_rate: cfg.sample_rate,
                },
                frames,
                fps: cfg.fps,
                subject_id: subject.clone(),
                sentence_id: format!("sentence{sentence:02}"),
            });
        }
        neutrals.insert(subject, neutral);
    }
    Ok(ToyDataset {
        topology,
        reference,
        neutrals,
        sequences,
    })
}
