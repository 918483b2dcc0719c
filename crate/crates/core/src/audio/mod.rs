//! Audio frontend: WAV I/O, speech encoders and time-axis resampling of
//! feature sequences onto the motion frame rate.

pub mod logmel;
pub mod wav;
pub mod wav2vec2;

use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use logmel::{LogMelConfig, LogMelEncoder};
pub use wav::{decode_wav, encode_wav_pcm16, read_wav, write_wav, Waveform};
pub use wav2vec2::{Wav2Vec2Config, Wav2Vec2Encoder};

/// Rate every encoder consumes; other inputs are resampled first.
pub const ENCODER_SAMPLE_RATE: u32 = 16_000;

/// Environment variable pointing at the pretrained-encoder cache directory.
pub const CACHE_ENV: &str = "LIPFIELD_CACHE";

/// `T x C` per-frame features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub features: Array2<f64>,
    pub source_sample_rate: u32,
    pub frame_rate: f64,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }
}

/// A frozen speech encoder operating on 16 kHz mono audio.
pub trait SpeechEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn channels(&self) -> usize;
    fn native_frame_rate(&self) -> f64;
    fn encode_16k(&self, wave: &[f32]) -> Result<Array2<f64>>;
}

/// Serializable encoder choice, stored with speech-to-landmark checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Spectrogram(LogMelConfig),
    Pretrained {
        /// Directory with `config.json` and `model.safetensors`; defaults to
        /// `$LIPFIELD_CACHE/wav2vec2-base`.
        #[serde(default)]
        path: Option<PathBuf>,
        /// Number of transformer layers to run; all when unset.
        #[serde(default)]
        layer: Option<usize>,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Spectrogram(LogMelConfig::default())
    }
}

impl EncoderSpec {
    pub fn pretrained() -> Self {
        EncoderSpec::Pretrained {
            path: None,
            layer: None,
            normalize: true,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EncoderSpec::Spectrogram(_) => "spectrogram",
            EncoderSpec::Pretrained { .. } => "pretrained",
        }
    }

    /// Resolved checkpoint directory of a pretrained encoder.
    pub fn pretrained_dir(&self) -> Option<PathBuf> {
        match self {
            EncoderSpec::Spectrogram(_) => None,
            EncoderSpec::Pretrained { path: Some(p), .. } => Some(p.clone()),
            EncoderSpec::Pretrained { path: None, .. } => {
                std::env::var_os(CACHE_ENV).map(|c| PathBuf::from(c).join("wav2vec2-base"))
            }
        }
    }

    pub fn build(&self) -> Result<Box<dyn SpeechEncoder>> {
        match self {
            EncoderSpec::Spectrogram(cfg) => Ok(Box::new(LogMelEncoder::new(*cfg)?)),
            EncoderSpec::Pretrained { layer, normalize, .. } => {
                let dir = self.pretrained_dir().ok_or_else(|| {
                    Error::Config(format!("pretrained encoder needs a path or the {CACHE_ENV} environment variable"))
                })?;
                let mut enc = Wav2Vec2Encoder::load(&dir)?;
                enc.set_output_layer(*layer)?;
                enc.set_normalize(*normalize);
                Ok(Box::new(enc))
            }
        }
    }
}

/// Linear-interpolation resampler for waveforms.
pub fn resample_waveform(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let n_out = ((samples.len() as f64) * to as f64 / from as f64).round().max(1.0) as usize;
    let ratio = from as f64 / to as f64;
    (0..n_out)
        .map(|i| {
            let x = i as f64 * ratio;
            let i0 = (x.floor() as usize).min(samples.len() - 1);
            let i1 = (i0 + 1).min(samples.len() - 1);
            let a = (x - i0 as f64) as f32;
            samples[i0] * (1.0 - a) + samples[i1] * a
        })
        .collect()
}

/// Runs `encoder` on `samples`, resampling to 16 kHz first when needed.
pub fn encode_audio(samples: &[f32], sample_rate: u32, encoder: &dyn SpeechEncoder) -> Result<FeatureSequence> {
    if samples.is_empty() {
        return Err(Error::Audio("empty waveform".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Audio("sample rate must be positive".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Audio("waveform contains non-finite samples".into()));
    }
    let wave = resample_waveform(samples, sample_rate, ENCODER_SAMPLE_RATE);
    let features = encoder.encode_16k(&wave)?;
    Ok(FeatureSequence {
        features,
        source_sample_rate: sample_rate,
        frame_rate: encoder.native_frame_rate(),
    })
}

/// Linear interpolation along time onto exactly `target_t` frames, with the
/// first and last frames of input and output aligned.
pub fn resample_features(fs: &FeatureSequence, target_t: usize) -> Result<FeatureSequence> {
    let t = fs.len();
    if target_t == 0 || t == 0 {
        return Err(Error::Shape("feature resampling needs non-empty input and target".into()));
    }
    let frame_rate = fs.frame_rate * target_t as f64 / t as f64;
    if target_t == t {
        return Ok(FeatureSequence {
            frame_rate,
            ..fs.clone()
        });
    }
    let c = fs.channels();
    let mut out = Array2::zeros((target_t, c));
    for i in 0..target_t {
        let x = if target_t == 1 {
            0.0
        } else {
            i as f64 * (t - 1) as f64 / (target_t - 1) as f64
        };
        let i0 = (x.floor() as usize).min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        let a = x - i0 as f64;
        for k in 0..c {
            let (v0, v1) = (fs.features[[i0, k]], fs.features[[i1, k]]);
            out[[i, k]] = if a == 0.0 { v0 } else { v0 + a * (v1 - v0) };
        }
    }
    Ok(FeatureSequence {
        features: out,
        source_sample_rate: fs.source_sample_rate,
        frame_rate,
    })
}
