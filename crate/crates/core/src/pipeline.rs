//! Inference: audio and a neutral mesh in, an animated mesh sequence out.

use std::path::Path;

use ndarray::{s, Array3, Axis};

use crate::audio::{encode_audio, resample_features, EncoderSpec, SpeechEncoder, Waveform};
use crate::container::MotionContainer;
use crate::data::{resolve_neutrals, Neutrals, TalkingSequence};
use crate::eval::{align_to_prediction, to_displacements, EvalReport, MetricSet, SequenceReport};
use crate::mesh::{gather_rows, Mesh, TopologyAssets};
use crate::s2d::S2dModel;
use crate::s2l::S2lModel;
use crate::train::Checkpoint;
use crate::{Error, Result};

pub const DEFAULT_FPS: f64 = 60.0;

/// Output frame count for `duration` seconds of audio.
pub fn frame_count(duration: f64, fps: f64) -> usize {
    (duration * fps).round() as usize
}

pub struct Pipeline {
    pub s2l: S2lModel,
    pub s2l_params: Vec<f64>,
    pub s2d: S2dModel,
    pub s2d_params: Vec<f64>,
    pub assets: TopologyAssets,
    pub encoder_spec: EncoderSpec,
    encoder: Box<dyn SpeechEncoder>,
    pub fps: f64,
}

/// Predicted motion: landmark and dense displacements plus mesh positions.
#[derive(Clone, Debug)]
pub struct Animation {
    pub fps: f64,
    pub landmarks: Array3<f64>,
    pub displacements: Array3<f64>,
    pub vertices: Array3<f64>,
}

impl Animation {
    pub fn to_container(&self) -> Result<MotionContainer> {
        MotionContainer::from_frames(&self.vertices, self.fps)
    }
}

impl Pipeline {
    /// Builds from checkpoints, refusing either one if it was trained against
    /// different topology assets.
    pub fn from_checkpoints(s2l: &Checkpoint, s2d: &Checkpoint, assets: TopologyAssets, fps: f64) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        let hash = assets.content_hash();
        s2d.check_topology(&hash)?;
        s2l.check_topology(&hash)?;
        let (s2l_cfg, encoder_spec) = s2l.s2l_config()?;
        let s2l_model = S2lModel::new(s2l_cfg.clone())?;
        s2l.header.layout.ensure_same(&s2l_model.layout)?;
        let s2d_model = S2dModel::new(s2d.s2d_config()?.clone(), &assets)?;
        s2d.header.layout.ensure_same(&s2d_model.layout)?;
        if s2l_model.config.landmark_count != s2d_model.config.landmark_count {
            return Err(Error::Config(format!(
                "s2l predicts {} landmarks, s2d expects {}",
                s2l_model.config.landmark_count, s2d_model.config.landmark_count
            )));
        }
        let encoder = encoder_spec.build()?;
        if encoder.channels() != s2l_model.config.input_channels {
            return Err(Error::Config(format!(
                "encoder yields {} channels, s2l expects {}",
                encoder.channels(),
                s2l_model.config.input_channels
            )));
        }
        Ok(Pipeline {
            s2l: s2l_model,
            s2l_params: s2l.params.clone(),
            s2d: s2d_model,
            s2d_params: s2d.params.clone(),
            assets,
            encoder_spec: encoder_spec.clone(),
            encoder,
            fps,
        })
    }

    pub fn load(s2l: &Path, s2d: &Path, topology: &Path, fps: f64) -> Result<Self> {
        Self::from_checkpoints(&Checkpoint::load(s2l)?, &Checkpoint::load(s2d)?, TopologyAssets::load(topology)?, fps)
    }

    /// `frames x L x 3` landmark displacements for `wave`.
    pub fn predict_landmarks(&self, wave: &Waveform, frames: usize) -> Result<Array3<f64>> {
        if frames == 0 {
            return Err(Error::Audio("audio is too short for a single frame".into()));
        }
        let native = encode_audio(&wave.samples, wave.sample_rate, self.encoder.as_ref())?;
        let feats = resample_features(&native, frames)?;
        self.s2l.forward(&self.s2l_params, &feats.features.view())
    }

    /// Dense `K x M x 3` displacements, one decoder pass per frame.
    pub fn predict_dense(&self, landmarks: &Array3<f64>) -> Result<Array3<f64>> {
        let k = landmarks.dim().0;
        let mut out = Array3::zeros((k, self.s2d.vertex_count(), 3));
        for start in (0..k).step_by(64) {
            let end = (start + 64).min(k);
            let (y, _) = self.s2d.forward_batch(&self.s2d_params, &landmarks.slice(s![start..end, .., ..]))?;
            out.slice_mut(s![start..end, .., ..]).assign(&y);
        }
        Ok(out)
    }

    pub fn animate(&self, wave: &Waveform, neutral: &Mesh) -> Result<Animation> {
        self.assets.topology.check_mesh(neutral)?;
        let k = frame_count(wave.duration(), self.fps);
        let landmarks = self.predict_landmarks(wave, k)?;
        let displacements = self.predict_dense(&landmarks)?;
        let mut vertices = displacements.clone();
        let base = neutral.positions();
        for mut f in vertices.axis_iter_mut(Axis(0)) {
            f += &base;
        }
        Ok(Animation {
            fps: self.fps,
            landmarks,
            displacements,
            vertices,
        })
    }
}

/// Metrics on one sequence given predicted and true displacements.
pub fn sequence_report(
    label: String,
    assets: &TopologyAssets,
    pred_lm: &Array3<f64>,
    gt_lm: &Array3<f64>,
    pred_dense: &Array3<f64>,
    gt_dense: &Array3<f64>,
) -> Result<SequenceReport> {
    let topo = &assets.topology;
    Ok(SequenceReport {
        label,
        frames: pred_lm.dim().0,
        landmarks: MetricSet::compute(&pred_lm.view(), &gt_lm.view(), &topo.lip_indices)?,
        dense: MetricSet::compute(&pred_dense.view(), &gt_dense.view(), &topo.lip_vertices())?,
    })
}

fn gt_displacements(sq: &TalkingSequence, neutrals: &Neutrals, assets: &TopologyAssets) -> Result<(Array3<f64>, Array3<f64>)> {
    sq.validate(&assets.topology)?;
    let neutral = neutrals
        .get(&sq.subject_id)
        .ok_or_else(|| Error::Data(format!("{}: no neutral mesh", sq.label())))?;
    let dense = to_displacements(&sq.frames.view(), &neutral.view());
    Ok((gather_landmarks(&dense, assets), dense))
}

fn gather_landmarks(dense: &Array3<f64>, assets: &TopologyAssets) -> Array3<f64> {
    let idx = &assets.topology.landmark_indices;
    let mut out = Array3::zeros((dense.dim().0, idx.len(), 3));
    for (mut o, f) in out.outer_iter_mut().zip(dense.outer_iter()) {
        o.assign(&gather_rows(&f, idx));
    }
    out
}

/// Runs audio through both stages for every sequence and scores landmark
/// and dense outputs against the recorded motion. Ground truth is decimated
/// when the pipeline runs at a lower frame rate.
pub fn evaluate_pipeline(p: &Pipeline, sequences: &[TalkingSequence], neutrals: &Neutrals, split: &str) -> Result<EvalReport> {
    let neutrals = resolve_neutrals(sequences, neutrals);
    let mut reports = Vec::new();
    for sq in sequences {
        let (gt_lm, gt_dense) = gt_displacements(sq, &neutrals, &p.assets)?;
        let k = if (sq.fps - p.fps).abs() < 1e-9 {
            sq.frame_count()
        } else {
            frame_count(sq.audio.duration(), p.fps)
        };
        let pred_lm = p.predict_landmarks(&sq.audio, k)?;
        let pred_dense = p.predict_dense(&pred_lm)?;
        let (pl, gl) = align_to_prediction(&pred_lm.view(), p.fps, &gt_lm.view(), sq.fps)?;
        let (pd, gd) = align_to_prediction(&pred_dense.view(), p.fps, &gt_dense.view(), sq.fps)?;
        reports.push(sequence_report(sq.label(), &p.assets, &pl, &gl, &pd, &gd)?);
    }
    Ok(EvalReport::from_sequences(split, p.fps, reports))
}

/// Scores externally produced mesh sequences, matched to the ground truth by
/// subject and sentence. Landmark metrics use the gathered landmark vertices.
pub fn evaluate_predictions(
    predictions: &[TalkingSequence],
    ground_truth: &[TalkingSequence],
    neutrals: &Neutrals,
    assets: &TopologyAssets,
    split: &str,
) -> Result<EvalReport> {
    let neutrals = resolve_neutrals(ground_truth, neutrals);
    let mut reports = Vec::new();
    let mut fps = None;
    for gt in ground_truth {
        let pred = predictions
            .iter()
            .find(|p| p.subject_id == gt.subject_id && p.sentence_id == gt.sentence_id)
            .ok_or_else(|| Error::Data(format!("{}: no prediction", gt.label())))?;
        let (gt_lm, gt_dense) = gt_displacements(gt, &neutrals, assets)?;
        let neutral = &neutrals[&gt.subject_id];
        pred.validate(&assets.topology)?;
        let pred_dense = to_displacements(&pred.frames.view(), &neutral.view());
        let pred_lm = gather_landmarks(&pred_dense, assets);
        let (pl, gl) = align_to_prediction(&pred_lm.view(), pred.fps, &gt_lm.view(), gt.fps)?;
        let (pd, gd) = align_to_prediction(&pred_dense.view(), pred.fps, &gt_dense.view(), gt.fps)?;
        reports.push(sequence_report(gt.label(), assets, &pl, &gl, &pd, &gd)?);
        fps.get_or_insert(pred.fps);
    }
    Ok(EvalReport::from_sequences(split, fps.unwrap_or(DEFAULT_FPS), reports))
}
