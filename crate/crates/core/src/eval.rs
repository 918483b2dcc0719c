//! Lips error (LE), displacement error (DE) and displacement angle error
//! (DAE) on landmark and dense outputs.
//!
//! All metrics take `K x P x 3` arrays. LE and DE are in the input units
//! (millimetres), DAE in radians.

use std::fmt::Write as _;

use ndarray::{s, Array3, ArrayView1, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DAE_EPS: f64 = 1e-8;

/// Temporal aggregation of a per-frame maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Max over points per frame, mean over frames.
    #[default]
    FrameMaxMean,
    /// Max over points and frames.
    GlobalMax,
}

fn check_pair(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>) -> Result<()> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.dim(), gt.dim())));
    }
    if pred.dim().2 != 3 {
        return Err(Error::Shape(format!("expected K x P x 3, got {:?}", pred.dim())));
    }
    if pred.dim().0 == 0 || pred.dim().1 == 0 {
        return Err(Error::Shape("empty sequence".into()));
    }
    Ok(())
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (x * x + y * y + z * z).sqrt()
}

fn aggregate(per_frame: impl Iterator<Item = f64>, agg: Aggregation) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for v in per_frame {
        n += 1;
        acc = match agg {
            Aggregation::FrameMaxMean => acc + v,
            Aggregation::GlobalMax => acc.max(v),
        };
    }
    match agg {
        Aggregation::FrameMaxMean if n > 0 => acc / n as f64,
        _ => acc,
    }
}

/// Max Euclidean error over `lip_indices` per frame, aggregated over frames.
pub fn lips_error(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, lip_indices: &[usize], agg: Aggregation) -> Result<f64> {
    check_pair(pred, gt)?;
    if lip_indices.is_empty() {
        return Err(Error::Shape("lip index set is empty".into()));
    }
    let p = pred.dim().1;
    if let Some(&bad) = lip_indices.iter().find(|&&i| i >= p) {
        return Err(Error::Shape(format!("lip index {bad} >= point count {p}")));
    }
    let per_frame = pred.outer_iter().zip(gt.outer_iter()).map(|(pf, gf)| {
        lip_indices
            .iter()
            .map(|&i| dist(pf.row(i), gf.row(i)))
            .fold(0.0, f64::max)
    });
    Ok(aggregate(per_frame, agg))
}

/// Mean Euclidean error over all frames and points.
pub fn displacement_error(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>) -> Result<f64> {
    check_pair(pred, gt)?;
    let (k, p, _) = pred.dim();
    let total: f64 = pred
        .outer_iter()
        .zip(gt.outer_iter())
        .map(|(pf, gf)| pf.outer_iter().zip(gf.outer_iter()).map(|(a, b)| dist(a, b)).sum::<f64>())
        .sum();
    Ok(total / (k * p) as f64)
}

fn angle(a: ArrayView1<f64>, b: ArrayView1<f64>, eps: f64) -> Option<f64> {
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na < eps || nb < eps {
        return None;
    }
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cx = a[1] * b[2] - a[2] * b[1];
    let cy = a[2] * b[0] - a[0] * b[2];
    let cz = a[0] * b[1] - a[1] * b[0];
    Some((cx * cx + cy * cy + cz * cz).sqrt().atan2(d))
}

/// Per-frame max angle between predicted and true displacements.
///
/// Points where either vector is shorter than `eps` are skipped; frames with
/// no remaining points are left out of the aggregate.
pub fn displacement_angle_error(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, eps: f64, agg: Aggregation) -> Result<f64> {
    check_pair(pred, gt)?;
    let per_frame = pred.outer_iter().zip(gt.outer_iter()).filter_map(|(pf, gf)| {
        pf.outer_iter()
            .zip(gf.outer_iter())
            .filter_map(|(a, b)| angle(a, b, eps))
            .reduce(f64::max)
    });
    Ok(aggregate(per_frame, agg))
}

/// Mean angle over every valid point of every frame.
pub fn displacement_angle_mean(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, eps: f64) -> Result<f64> {
    check_pair(pred, gt)?;
    let mut n = 0usize;
    let mut acc = 0.0;
    for (pf, gf) in pred.outer_iter().zip(gt.outer_iter()) {
        for (a, b) in pf.outer_iter().zip(gf.outer_iter()) {
            if let Some(t) = angle(a, b, eps) {
                acc += t;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { acc / n as f64 })
}

/// Keeps every `from_fps / to_fps`-th frame. The ratio must be an integer.
pub fn decimate_frames(frames: &ArrayView3<f64>, from_fps: f64, to_fps: f64) -> Result<Array3<f64>> {
    if !(from_fps > 0.0 && to_fps > 0.0) {
        return Err(Error::Config("frame rates must be positive".into()));
    }
    let ratio = from_fps / to_fps;
    let step = ratio.round();
    if step < 1.0 || (ratio - step).abs() > 1e-9 {
        return Err(Error::Config(format!("cannot decimate {from_fps} fps to {to_fps} fps")));
    }
    Ok(frames.slice(s![..;step as usize, .., ..]).to_owned())
}

/// Brings `gt` to the prediction's frame rate and trims both to a common
/// length. Off-by-one lengths are tolerated.
pub fn align_to_prediction(
    pred: &ArrayView3<f64>,
    pred_fps: f64,
    gt: &ArrayView3<f64>,
    gt_fps: f64,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let gt = if (pred_fps - gt_fps).abs() > 1e-9 {
        decimate_frames(gt, gt_fps, pred_fps)?
    } else {
        gt.to_owned()
    };
    let (kp, kg) = (pred.dim().0, gt.dim().0);
    if kp.abs_diff(kg) > 1 {
        return Err(Error::Shape(format!("prediction has {kp} frames, ground truth {kg}")));
    }
    let k = kp.min(kg);
    Ok((pred.slice(s![..k, .., ..]).to_owned(), gt.slice(s![..k, .., ..]).to_owned()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub le: f64,
    pub le_global_max: f64,
    pub de: f64,
    pub dae: f64,
    pub dae_global_max: f64,
    pub dae_mean: f64,
}

impl MetricSet {
    pub fn compute(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, lip_indices: &[usize]) -> Result<Self> {
        Ok(MetricSet {
            le: lips_error(pred, gt, lip_indices, Aggregation::FrameMaxMean)?,
            le_global_max: lips_error(pred, gt, lip_indices, Aggregation::GlobalMax)?,
            de: displacement_error(pred, gt)?,
            dae: displacement_angle_error(pred, gt, DAE_EPS, Aggregation::FrameMaxMean)?,
            dae_global_max: displacement_angle_error(pred, gt, DAE_EPS, Aggregation::GlobalMax)?,
            dae_mean: displacement_angle_mean(pred, gt, DAE_EPS)?,
        })
    }

    fn values(&self) -> [f64; 6] {
        [self.le, self.le_global_max, self.de, self.dae, self.dae_global_max, self.dae_mean]
    }

    pub fn mean(sets: &[MetricSet]) -> MetricSet {
        if sets.is_empty() {
            return MetricSet::default();
        }
        let n = sets.len() as f64;
        let mut acc = [0.0; 6];
        for s in sets {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        let [le, le_global_max, de, dae, dae_global_max, dae_mean] = acc.map(|a| a / n);
        MetricSet {
            le,
            le_global_max,
            de,
            dae,
            dae_global_max,
            dae_mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub label: String,
    pub frames: usize,
    pub landmarks: MetricSet,
    pub dense: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub fps: f64,
    pub sequences: Vec<SequenceReport>,
    pub landmarks: MetricSet,
    pub dense: MetricSet,
}

const CSV_HEADER: [&str; 9] = ["scope", "block", "frames", "le_mm", "le_global_max_mm", "de_mm", "dae_rad", "dae_global_max_rad", "dae_mean_rad"];

impl EvalReport {
    pub fn from_sequences(split: impl Into<String>, fps: f64, sequences: Vec<SequenceReport>) -> Self {
        let lm: Vec<_> = sequences.iter().map(|s| s.landmarks).collect();
        let dn: Vec<_> = sequences.iter().map(|s| s.dense).collect();
        EvalReport {
            split: split.into(),
            fps,
            landmarks: MetricSet::mean(&lm),
            dense: MetricSet::mean(&dn),
            sequences,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        let total: usize = self.sequences.iter().map(|s| s.frames).sum();
        let rows = self
            .sequences
            .iter()
            .map(|s| (s.label.as_str(), s.frames, &s.landmarks, &s.dense))
            .chain(std::iter::once(("mean", total, &self.landmarks, &self.dense)));
        for (scope, frames, lm, dn) in rows {
            for (block, m) in [("landmarks", lm), ("dense", dn)] {
                let mut rec = vec![scope.to_string(), block.to_string(), frames.to_string()];
                rec.extend(m.values().iter().map(|v| format!("{v:.9}")));
                w.write_record(&rec).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Two metric blocks side by side: Landmarks | Dense, each LE DE DAE.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split: {}  fps: {}  sequences: {}", self.split, self.fps, self.sequences.len());
        let _ = writeln!(out, "{:<24} | {:^30} | {:^30}", "", "Landmarks", "Dense");
        let _ = writeln!(
            out,
            "{:<24} | {:>9} {:>9} {:>10} | {:>9} {:>9} {:>10}",
            "", "LE (mm)", "DE (mm)", "DAE (Rad)", "LE (mm)", "DE (mm)", "DAE (Rad)"
        );
        let row = |out: &mut String, name: &str, l: &MetricSet, d: &MetricSet| {
            let _ = writeln!(
                out,
                "{:<24} | {:>9.4} {:>9.4} {:>10.4} | {:>9.4} {:>9.4} {:>10.4}",
                name, l.le, l.de, l.dae, d.le, d.de, d.dae
            );
        };
        for s in &self.sequences {
            row(&mut out, &s.label, &s.landmarks, &s.dense);
        }
        row(&mut out, "mean", &self.landmarks, &self.dense);
        let _ = writeln!(
            out,
            "{:<24} | {:>9.4} {:>9} {:>10.4} | {:>9.4} {:>9} {:>10.4}",
            "mean (global max)", self.landmarks.le_global_max, "", self.landmarks.dae_global_max, self.dense.le_global_max, "", self.dense.dae_global_max
        );
        out
    }
}

/// Displacements of every point of `frames` relative to `neutral`.
pub fn to_displacements(frames: &ArrayView3<f64>, neutral: &ndarray::ArrayView2<f64>) -> Array3<f64> {
    let mut out = frames.to_owned();
    for mut f in out.axis_iter_mut(Axis(0)) {
        f -= neutral;
    }
    out
}
