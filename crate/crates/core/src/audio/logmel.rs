use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{SpeechEncoder, ENCODER_SAMPLE_RATE};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogMelConfig {
    pub n_fft: usize,
    pub n_mels: usize,
    /// Output frames per second; the hop is `16000 / fps` samples.
    pub fps: f64,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        LogMelConfig {
            n_fft: 512,
            n_mels: 40,
            fps: 60.0,
        }
    }
}

/// Deterministic log-mel spectrogram; frame `i` is centred on sample
/// `i * hop` and the signal is zero outside its support.
pub struct LogMelEncoder {
    config: LogMelConfig,
    window: Vec<f32>,
    filters: Vec<Vec<(usize, f32)>>,
    fft: Arc<dyn Fft<f32>>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl LogMelEncoder {
    pub fn new(config: LogMelConfig) -> Result<Self> {
        if config.n_fft < 2 || config.n_mels == 0 || !(config.fps > 0.0) {
            return Err(Error::Config("log-mel needs n_fft >= 2, n_mels >= 1 and fps > 0".into()));
        }
        let n = config.n_fft;
        let window = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32)
            .collect();
        let bins = n / 2 + 1;
        let sr = ENCODER_SAMPLE_RATE as f64;
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(sr / 2.0));
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let filters = (0..config.n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .filter_map(|b| {
                        let f = b as f64 * sr / n as f64;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((b, w as f32))
                    })
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(LogMelEncoder {
            config,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> LogMelConfig {
        self.config
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        let t = (samples as f64 * self.config.fps / ENCODER_SAMPLE_RATE as f64).round() as usize;
        t.max(1)
    }
}

impl SpeechEncoder for LogMelEncoder {
    fn name(&self) -> &str {
        "spectrogram"
    }

    fn channels(&self) -> usize {
        self.config.n_mels
    }

    fn native_frame_rate(&self) -> f64 {
        self.config.fps
    }

    fn encode_16k(&self, wave: &[f32]) -> Result<Array2<f64>> {
        let n = self.config.n_fft;
        let t = self.frame_count(wave.len());
        let hop = ENCODER_SAMPLE_RATE as f64 / self.config.fps;
        let mut out = Array2::zeros((t, self.config.n_mels));
        let mut buf = vec![Complex::new(0.0f32, 0.0); n];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f32; n / 2 + 1];
        for i in 0..t {
            let start = (i as f64 * hop).round() as i64 - (n / 2) as i64;
            for (k, c) in buf.iter_mut().enumerate() {
                let idx = start + k as i64;
                let s = if idx >= 0 && (idx as usize) < wave.len() { wave[idx as usize] } else { 0.0 };
                *c = Complex::new(s * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr() / n as f32;
            }
            for (m, f) in self.filters.iter().enumerate() {
                let e: f32 = f.iter().map(|&(b, w)| w * power[b]).sum();
                out[[i, m]] = ((e as f64) + 1e-6).ln() / 10.0;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_gives_sixty_frames() {
        let enc = LogMelEncoder::new(LogMelConfig::default()).unwrap();
        let wave: Vec<f32> = (0..16000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
        let f = enc.encode_16k(&wave).unwrap();
        assert_eq!(f.dim(), (60, 40));
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn silence_is_finite_and_constant() {
        let enc = LogMelEncoder::new(LogMelConfig::default()).unwrap();
        let f = enc.encode_16k(&vec![0.0; 8000]).unwrap();
        let v = (1e-6f64).ln() / 10.0;
        assert!(f.iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn tone_lands_in_matching_band() {
        let enc = LogMelEncoder::new(LogMelConfig::default()).unwrap();
        let low: Vec<f32> = (0..16000).map(|i| (2.0 * std::f32::consts::PI * 200.0 * i as f32 / 16000.0).sin()).collect();
        let high: Vec<f32> = (0..16000).map(|i| (2.0 * std::f32::consts::PI * 5000.0 * i as f32 / 16000.0).sin()).collect();
        let fl = enc.encode_16k(&low).unwrap();
        let fh = enc.encode_16k(&high).unwrap();
        let argmax = |row: ndarray::ArrayView1<f64>| row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(argmax(fl.row(30)) < 10);
        assert!(argmax(fh.row(30)) > 25);
    }
}
