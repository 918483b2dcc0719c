//! Displacement datasets for both stages, subject splits, a synthetic toy
//! corpus and on-disk layouts.

pub mod disk;
pub mod toy;
pub mod vocaset;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{encode_audio, resample_features, FeatureSequence, SpeechEncoder, Waveform};
use crate::mesh::{gather_rows, Topology};
use crate::{Error, Result};

pub use disk::{load_dataset, save_dataset, DiskDataset};
pub use toy::{generate_toy_dataset, toy_topology, ToyConfig, ToyDataset};

/// Neutral vertex positions (`M x 3`) keyed by subject.
pub type Neutrals = BTreeMap<String, Array2<f64>>;

/// One spoken sentence with its registered mesh sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TalkingSequence {
    pub audio: Waveform,
    /// `K x M x 3` vertex positions.
    pub frames: Array3<f64>,
    pub fps: f64,
    pub subject_id: String,
    pub sentence_id: String,
}

impl TalkingSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.dim().0
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.subject_id, self.sentence_id)
    }

    /// Frames implied by the audio duration.
    pub fn expected_frames(&self) -> usize {
        (self.audio.duration() * self.fps).round() as usize
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let (k, m, c) = self.frames.dim();
        if k == 0 || c != 3 {
            return Err(Error::Data(format!("{}: frames must be K x M x 3 with K >= 1", self.label())));
        }
        if m != topo.vertex_count {
            return Err(Error::Data(format!(
                "{}: frames have {m} vertices, topology has {}",
                self.label(),
                topo.vertex_count
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Data(format!("{}: fps must be positive", self.label())));
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{}: non-finite vertex coordinate", self.label())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct S2lSample {
    pub subject_id: String,
    pub sentence_id: String,
    /// Encoder features resampled to the motion frame rate.
    pub features: FeatureSequence,
    /// `K x L x 3` landmark displacements.
    pub displacements: Array3<f64>,
    pub neutral_landmarks: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct S2dSample {
    pub subject_id: String,
    /// `M x 3`.
    pub dense_displacement: Array2<f64>,
    /// `L x 3`, equal to `dense_displacement` at the landmark vertices.
    pub landmark_displacement: Array2<f64>,
}

/// Completes `provided` with the first frame of each remaining subject's
/// first sequence.
pub fn resolve_neutrals(sequences: &[TalkingSequence], provided: &Neutrals) -> Neutrals {
    let mut out = provided.clone();
    for sq in sequences {
        if !out.contains_key(&sq.subject_id) {
            out.insert(sq.subject_id.clone(), sq.frames.index_axis(Axis(0), 0).to_owned());
        }
    }
    out
}

fn neutral_for<'a>(neutrals: &'a Neutrals, sq: &TalkingSequence, m: usize) -> Result<&'a Array2<f64>> {
    let n = neutrals
        .get(&sq.subject_id)
        .ok_or_else(|| Error::Data(format!("{}: no neutral mesh for subject", sq.label())))?;
    if n.dim() != (m, 3) {
        return Err(Error::Data(format!("{}: neutral has shape {:?}", sq.label(), n.dim())));
    }
    Ok(n)
}

/// Landmark displacement sequences paired with encoder features aligned to
/// the motion frames.
pub fn build_s2l_dataset(
    sequences: &[TalkingSequence],
    topo: &Topology,
    encoder: &dyn SpeechEncoder,
    neutrals: &Neutrals,
) -> Result<Vec<S2lSample>> {
    if sequences.is_empty() {
        return Err(Error::Data("no sequences".into()));
    }
    let neutrals = resolve_neutrals(sequences, neutrals);
    sequences
        .iter()
        .map(|sq| {
            sq.validate(topo)?;
            let k = sq.frame_count();
            let expected = sq.expected_frames();
            if k.abs_diff(expected) > 1 {
                return Err(Error::Data(format!(
                    "{}: {k} frames but the audio implies {expected} at {} fps",
                    sq.label(),
                    sq.fps
                )));
            }
            let neutral = neutral_for(&neutrals, sq, topo.vertex_count)?;
            let neutral_lm = gather_rows(&neutral.view(), &topo.landmark_indices);
            let l = topo.landmark_count();
            let mut disp = Array3::zeros((k, l, 3));
            for t in 0..k {
                let frame = sq.frames.index_axis(Axis(0), t);
                let lm = gather_rows(&frame, &topo.landmark_indices);
                disp.index_axis_mut(Axis(0), t).assign(&(&lm - &neutral_lm));
            }
            let native = encode_audio(&sq.audio.samples, sq.audio.sample_rate, encoder)?;
            let features = resample_features(&native, k)?;
            Ok(S2lSample {
                subject_id: sq.subject_id.clone(),
                sentence_id: sq.sentence_id.clone(),
                features,
                displacements: disp,
                neutral_landmarks: neutral_lm,
            })
        })
        .collect()
}

/// One sample per frame: dense displacement and its landmark gather.
pub fn build_s2d_dataset(sequences: &[TalkingSequence], topo: &Topology, neutrals: &Neutrals) -> Result<Vec<S2dSample>> {
    if sequences.is_empty() {
        return Err(Error::Data("no sequences".into()));
    }
    let neutrals = resolve_neutrals(sequences, neutrals);
    let mut out = Vec::new();
    for sq in sequences {
        sq.validate(topo)?;
        let neutral = neutral_for(&neutrals, sq, topo.vertex_count)?;
        for t in 0..sq.frame_count() {
            let dense = &sq.frames.slice(s![t, .., ..]) - neutral;
            let lm = gather_rows(&dense.view(), &topo.landmark_indices);
            out.push(S2dSample {
                subject_id: sq.subject_id.clone(),
                dense_displacement: dense,
                landmark_displacement: lm,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Subject-disjoint split; subjects are shuffled with `seed` and assigned
/// in train, validation, test order. Surplus subjects are left out.
pub fn split_subjects(subjects: &BTreeSet<String>, train_n: usize, val_n: usize, test_n: usize, seed: u64) -> Result<Split<String>> {
    let need = train_n + val_n + test_n;
    if subjects.len() < need {
        return Err(Error::Data(format!(
            "{} subjects available, split needs {need} ({train_n}/{val_n}/{test_n})",
            subjects.len()
        )));
    }
    let mut order: Vec<String> = subjects.iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(train_n + val_n);
    let val = order.split_off(train_n);
    Ok(Split {
        train: order,
        val,
        test: test.into_iter().take(test_n).collect(),
    })
}

pub fn split_by_subject(
    sequences: &[TalkingSequence],
    train_n: usize,
    val_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<Split<TalkingSequence>> {
    let subjects: BTreeSet<String> = sequences.iter().map(|s| s.subject_id.clone()).collect();
    let split = split_subjects(&subjects, train_n, val_n, test_n, seed)?;
    let pick = |ids: &[String]| -> Vec<TalkingSequence> {
        sequences.iter().filter(|s| ids.contains(&s.subject_id)).cloned().collect()
    };
    Ok(Split {
        train: pick(&split.train),
        val: pick(&split.val),
        test: pick(&split.test),
    })
}
