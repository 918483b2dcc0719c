//! Independent training loops for the two stages, with Adam, per-epoch loss
//! history, validation-DE model selection and resumable checkpoints.
//!
//! Shuffling is keyed on `(seed, epoch)`, so a run resumed from any
//! checkpoint (including one written mid-epoch by `max_steps`) continues
//! exactly as the uninterrupted run would.

pub mod checkpoint;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::EncoderSpec;
use crate::data::{Neutrals, S2dSample, S2lSample};
use crate::eval::displacement_error;
use crate::mesh::{TopologyAssets, VertexWeights};
use crate::nn::adam::clip_grad_norm;
use crate::nn::{Adam, AdamConfig};
use crate::s2d::{loss_s2d_total_grad, S2dModel};
use crate::s2l::{loss_s2l_total_grad, S2lModel};
use crate::{Error, Result};

pub use checkpoint::{write_atomic, AdamState, Checkpoint, CheckpointHeader, ModelSpec};

/// Atomically writes a text file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Sequences per batch for s2l, frames per batch for s2d.
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Validate every this many epochs (and after the last one).
    pub validation_interval: usize,
    /// Stop after this many optimiser steps in total.
    pub max_steps: Option<u64>,
    /// Global gradient-norm clip; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::s2l()
    }
}

impl TrainConfig {
    pub fn s2l() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            seed: 0,
            checkpoint_dir: None,
            validation_interval: 1,
            max_steps: None,
            grad_clip: None,
        }
    }

    pub fn s2d() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            ..TrainConfig::s2l()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        if self.batch_size == 0 || self.validation_interval == 0 {
            return Err(Error::Config("batch_size and validation_interval must be positive".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Position within a run. `epoch` counts completed epochs; `batch` and the
/// partial sums describe the epoch in progress.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub epoch: usize,
    pub step: u64,
    pub batch: usize,
    pub partial_sums: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub step: u64,
    /// Mean per-batch loss terms, in [`TrainOutcome::term_names`] order.
    pub terms: Vec<f64>,
    pub val_de: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub best_params: Option<Vec<f64>>,
    pub history: Vec<EpochRecord>,
    pub best_val: Option<f64>,
    pub term_names: &'static [&'static str],
    /// Final state, including optimiser moments.
    pub last: Checkpoint,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        history_csv(self.term_names, &self.history)
    }
}

pub fn history_csv(names: &[&str], history: &[EpochRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["epoch", "step"];
    head.extend_from_slice(names);
    head.push("val_de");
    w.write_record(&head).expect("in-memory write");
    for r in history {
        let mut row = vec![r.epoch.to_string(), r.step.to_string()];
        row.extend(r.terms.iter().map(|v| format!("{v:e}")));
        row.push(r.val_de.map_or(String::new(), |v| format!("{v:e}")));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn checkpoint_paths(dir: &Path, kind: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{kind}_last.lckp")),
        dir.join(format!("{kind}_best.lckp")),
        dir.join(format!("{kind}_history.csv")),
    )
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1 + epoch as u64);
    r
}

trait Task {
    const TERMS: &'static [&'static str];
    fn spec(&self) -> ModelSpec;
    fn topology_hash(&self) -> Option<String>;
    fn fresh_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn layout(&self) -> &crate::nn::ParamLayout;
    fn batches(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>>;
    /// Loss terms (total last) and the parameter gradient.
    fn step(&self, params: &[f64], batch: &[usize]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn val_de(&self, params: &[f64]) -> Result<f64>;
}

fn run<T: Task>(task: &T, cfg: &TrainConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_terms = T::TERMS.len();
    let (mut params, mut adam, mut progress, mut history, mut best_val) = match resume {
        Some(ck) => {
            ck.header.layout.ensure_same(task.layout())?;
            if ck.header.model != task.spec() {
                return Err(Error::Checkpoint("resume checkpoint was trained with a different model config".into()));
            }
            if let Some(h) = task.topology_hash() {
                ck.check_topology(&h)?;
            }
            let mut adam = ck.optimizer().ok_or_else(|| Error::Checkpoint("resume checkpoint has no optimiser state".into()))?;
            adam.config = cfg.adam();
            let h = ck.header;
            (ck.params, adam, h.progress, h.history, h.best_val)
        }
        None => {
            let p = task.fresh_params(&mut init_rng(cfg.seed));
            let n = p.len();
            (p, Adam::new(cfg.adam(), n), Progress::default(), Vec::new(), None)
        }
    };
    if progress.partial_sums.len() != n_terms {
        progress.partial_sums = vec![0.0; n_terms];
    }
    let mut best_params = None;
    let paths = cfg.checkpoint_dir.as_ref().map(|d| {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        Ok::<_, Error>(checkpoint_paths(d, task.spec().kind()))
    });
    let paths = paths.transpose()?;
    let snapshot = |params: &[f64], adam: &Adam, progress: &Progress, history: &[EpochRecord], best_val: Option<f64>| Checkpoint {
        header: CheckpointHeader {
            model: task.spec(),
            topology_hash: task.topology_hash(),
            layout: task.layout().clone(),
            train: cfg.clone(),
            progress: progress.clone(),
            adam: Some(AdamState {
                config: adam.config,
                t: adam.t,
            }),
            best_val,
            history: history.to_vec(),
        },
        params: params.to_vec(),
        moments: Some((adam.m.clone(), adam.v.clone())),
    };
    let persist = |ck: &Checkpoint| -> Result<()> {
        if let Some((last, _, csv)) = &paths {
            ck.save(last)?;
            checkpoint::write_atomic(csv, history_csv(T::TERMS, &ck.header.history).as_bytes())?;
        }
        Ok(())
    };

    let mut stopped = false;
    'outer: while progress.epoch < cfg.epochs {
        let e = progress.epoch;
        let batches = task.batches(cfg.batch_size, &mut epoch_rng(cfg.seed, e));
        if batches.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        for (bi, batch) in batches.iter().enumerate().skip(progress.batch) {
            if cfg.max_steps.is_some_and(|m| progress.step >= m) {
                stopped = true;
                break 'outer;
            }
            let (terms, mut grads) = task.step(&params, batch)?;
            for (name, v) in T::TERMS.iter().zip(&terms) {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        term: name,
                        epoch: e + 1,
                        batch: bi,
                    });
                }
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    term: "gradient",
                    epoch: e + 1,
                    batch: bi,
                });
            }
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            adam.step(&mut params, &grads);
            progress.step += 1;
            progress.batch = bi + 1;
            for (s, v) in progress.partial_sums.iter_mut().zip(&terms) {
                *s += v;
            }
        }
        let done = progress.batch.max(1) as f64;
        let terms: Vec<f64> = progress.partial_sums.iter().map(|s| s / done).collect();
        let validate = (e + 1) % cfg.validation_interval == 0 || e + 1 == cfg.epochs;
        let val_de = if validate { Some(task.val_de(&params)?) } else { None };
        log::info!(
            "{} epoch {} step {}: {} val_de {}",
            task.spec().kind(),
            e + 1,
            progress.step,
            T::TERMS.iter().zip(&terms).map(|(n, v)| format!("{n}={v:.6}")).collect::<Vec<_>>().join(" "),
            val_de.map_or("-".into(), |v| format!("{v:.6}"))
        );
        history.push(EpochRecord {
            epoch: e + 1,
            step: progress.step,
            terms,
            val_de,
        });
        progress.epoch += 1;
        progress.batch = 0;
        progress.partial_sums = vec![0.0; n_terms];
        if let Some(v) = val_de {
            if best_val.is_none_or(|b| v < b) {
                best_val = Some(v);
                best_params = Some(params.clone());
                if let Some((_, best, _)) = &paths {
                    snapshot(&params, &adam, &progress, &history, best_val).without_optimizer().save(best)?;
                }
            }
        }
        persist(&snapshot(&params, &adam, &progress, &history, best_val))?;
    }
    let last = snapshot(&params, &adam, &progress, &history, best_val);
    if stopped {
        persist(&last)?;
    }
    // stopped before any validation: the current weights stand in as best
    if best_params.is_none() && best_val.is_none() {
        if let Some((_, best, _)) = &paths {
            last.clone().without_optimizer().save(best)?;
        }
        best_params = Some(params.clone());
    }
    Ok(TrainOutcome {
        params,
        best_params,
        history,
        best_val,
        term_names: T::TERMS,
        last,
    })
}

struct S2lTask<'a> {
    model: &'a S2lModel,
    encoder: &'a EncoderSpec,
    topology_hash: Option<String>,
    train: &'a [S2lSample],
    val: &'a [S2lSample],
}

impl Task for S2lTask<'_> {
    const TERMS: &'static [&'static str] = &["rec", "mouth", "cos", "vel", "total"];

    fn spec(&self) -> ModelSpec {
        ModelSpec::S2l {
            config: self.model.config.clone(),
            encoder: self.encoder.clone(),
        }
    }

    fn topology_hash(&self) -> Option<String> {
        self.topology_hash.clone()
    }

    fn fresh_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.model.init_params(rng)
    }

    fn layout(&self) -> &crate::nn::ParamLayout {
        &self.model.layout
    }

    /// Length buckets, shuffled and chunked, then the chunk order shuffled.
    fn batches(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.train.iter().enumerate() {
            buckets.entry(s.features.len()).or_default().push(i);
        }
        let mut out = Vec::new();
        for (_, mut idx) in buckets {
            idx.shuffle(rng);
            out.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
        }
        out.shuffle(rng);
        out
    }

    fn step(&self, params: &[f64], batch: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let feats: Vec<ArrayView2<f64>> = batch.iter().map(|&i| self.train[i].features.features.view()).collect();
        let gt: Vec<Array3<f64>> = batch.iter().map(|&i| self.train[i].displacements.clone()).collect();
        let (pred, cache) = self.model.forward_batch(params, &feats)?;
        let (b, d_pred) = loss_s2l_total_grad(&gt, &pred, &self.model.config.objective())?;
        let grads = self.model.backward(params, &cache, &d_pred);
        Ok((vec![b.rec, b.mouth, b.cos, b.vel, b.total], grads))
    }

    fn val_de(&self, params: &[f64]) -> Result<f64> {
        let set = if self.val.is_empty() { self.train } else { self.val };
        s2l_mean_de(self.model, params, set)
    }
}

/// Mean over sequences of the landmark displacement error.
pub fn s2l_mean_de(model: &S2lModel, params: &[f64], samples: &[S2lSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut acc = 0.0;
    for s in samples {
        let pred = model.forward(params, &s.features.features.view())?;
        acc += displacement_error(&pred.view(), &s.displacements.view())?;
    }
    Ok(acc / samples.len() as f64)
}

pub struct S2lData<'a> {
    pub train: &'a [S2lSample],
    pub val: &'a [S2lSample],
    pub encoder: &'a EncoderSpec,
    pub topology_hash: Option<String>,
}

pub fn train_s2l(model: &S2lModel, data: S2lData<'_>, cfg: &TrainConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for s in data.train.iter().chain(data.val) {
        if s.features.channels() != model.config.input_channels {
            return Err(Error::Config(format!(
                "{}/{}: features have {} channels, model expects {}",
                s.subject_id,
                s.sentence_id,
                s.features.channels(),
                model.config.input_channels
            )));
        }
    }
    let task = S2lTask {
        model,
        encoder: data.encoder,
        topology_hash: data.topology_hash,
        train: data.train,
        val: data.val,
    };
    run(&task, cfg, resume)
}

struct S2dTask<'a> {
    model: &'a S2dModel,
    weights: VertexWeights,
    neutrals: &'a Neutrals,
    train: &'a [S2dSample],
    val: &'a [S2dSample],
}

fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a ndarray::Array2<f64>>) -> Array3<f64> {
    let views: Vec<_> = rows.map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).expect("equal shapes")
}

impl S2dTask<'_> {
    fn neutral(&self, subject: &str) -> Result<&ndarray::Array2<f64>> {
        self.neutrals
            .get(subject)
            .ok_or_else(|| Error::Data(format!("no neutral mesh for subject {subject}")))
    }
}

impl Task for S2dTask<'_> {
    const TERMS: &'static [&'static str] = &["rec", "cos", "weighted", "total"];

    fn spec(&self) -> ModelSpec {
        ModelSpec::S2d {
            config: self.model.config.clone(),
        }
    }

    fn topology_hash(&self) -> Option<String> {
        Some(self.model.topology_hash.clone())
    }

    fn fresh_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.model.init_params(rng)
    }

    fn layout(&self) -> &crate::nn::ParamLayout {
        &self.model.layout
    }

    fn batches(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.train.len()).collect();
        idx.shuffle(rng);
        idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
    }

    fn step(&self, params: &[f64], batch: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let samples: Vec<&S2dSample> = batch.iter().map(|&i| &self.train[i]).collect();
        let lm = stack(samples.iter().map(|s| &s.landmark_displacement));
        let gt = stack(samples.iter().map(|s| &s.dense_displacement));
        let neutrals = samples.iter().map(|s| self.neutral(&s.subject_id)).collect::<Result<Vec<_>>>()?;
        let neutral = stack(neutrals.into_iter());
        let (pred, cache) = self.model.forward_batch(params, &lm.view())?;
        let cfg = &self.model.config;
        let (b, d_pred) = loss_s2d_total_grad(&gt.view(), &pred.view(), &neutral.view(), &self.weights, &cfg.weights, cfg.cos_eps)?;
        let grads = self.model.backward(params, &cache, &d_pred.view());
        Ok((vec![b.rec, b.cos, b.weighted, b.total], grads))
    }

    fn val_de(&self, params: &[f64]) -> Result<f64> {
        let set = if self.val.is_empty() { self.train } else { self.val };
        s2d_mean_de(self.model, params, set)
    }
}

/// Dense displacement error over all frames of `samples`.
pub fn s2d_mean_de(model: &S2dModel, params: &[f64], samples: &[S2dSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut acc = 0.0;
    for chunk in samples.chunks(64) {
        let lm = stack(chunk.iter().map(|s| &s.landmark_displacement));
        let gt = stack(chunk.iter().map(|s| &s.dense_displacement));
        let (pred, _) = model.forward_batch(params, &lm.view())?;
        acc += displacement_error(&pred.view(), &gt.view())? * chunk.len() as f64;
    }
    Ok(acc / samples.len() as f64)
}

pub struct S2dData<'a> {
    pub train: &'a [S2dSample],
    pub val: &'a [S2dSample],
    pub neutrals: &'a Neutrals,
    pub assets: &'a TopologyAssets,
}

pub fn train_s2d(model: &S2dModel, data: S2dData<'_>, cfg: &TrainConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if data.assets.content_hash() != model.topology_hash {
        return Err(Error::TopologyMismatch {
            expected: model.topology_hash.clone(),
            found: data.assets.content_hash(),
        });
    }
    let task = S2dTask {
        model,
        weights: data.assets.weights()?,
        neutrals: data.neutrals,
        train: data.train,
        val: data.val,
    };
    for s in data.train.iter().chain(data.val) {
        task.neutral(&s.subject_id)?;
    }
    run(&task, cfg, resume)
}

#[cfg(test)]
mod tests;
