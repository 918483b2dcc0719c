use super::*;
use crate::audio::LogMelConfig;
use crate::data::toy::{generate_toy_dataset, ToyConfig, ToyDataset};
use crate::data::{build_s2d_dataset, build_s2l_dataset};
use crate::s2d::S2dConfig;
use crate::s2l::S2lConfig;

fn toy() -> ToyDataset {
    generate_toy_dataset(&ToyConfig {
        subdivisions: 2,
        duration: 0.2,
        ..ToyConfig::default()
    })
    .unwrap()
}

fn s2l_setup(toy: &ToyDataset) -> (S2lModel, Vec<S2lSample>, EncoderSpec) {
    let spec = EncoderSpec::Spectrogram(LogMelConfig::default());
    let enc = spec.build().unwrap();
    let samples = build_s2l_dataset(&toy.sequences, &toy.topology, enc.as_ref(), &toy.neutrals).unwrap();
    let model = S2lModel::new(S2lConfig {
        lstm_layers: 1,
        hidden_size: 8,
        input_channels: enc.channels(),
        landmark_count: 20,
        mouth_jaw_indices: toy.topology.mouth_jaw_indices.clone(),
        ..S2lConfig::default()
    })
    .unwrap();
    (model, samples, spec)
}

fn s2d_setup(toy: &ToyDataset) -> (S2dModel, Vec<S2dSample>, TopologyAssets) {
    let assets = TopologyAssets::build(toy.topology.clone(), &toy.reference, &[0.5; 3], 7, 1).unwrap();
    let samples = build_s2d_dataset(&toy.sequences, &toy.topology, &toy.neutrals).unwrap();
    let model = S2dModel::new(
        S2dConfig {
            layer_channels: vec![4, 4, 4],
            lift_channels: 4,
            landmark_count: 20,
            ..S2dConfig::default()
        },
        &assets,
    )
    .unwrap();
    (model, samples, assets)
}

fn cfg(epochs: usize, lr: f64, batch: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: lr,
        batch_size: batch,
        seed: 7,
        ..TrainConfig::s2l()
    }
}

fn run_s2l(model: &S2lModel, samples: &[S2lSample], spec: &EncoderSpec, c: &TrainConfig, resume: Option<Checkpoint>) -> TrainOutcome {
    let data = S2lData {
        train: samples,
        val: &[],
        encoder: spec,
        topology_hash: None,
    };
    train_s2l(model, data, c, resume).unwrap()
}

fn run_s2d(model: &S2dModel, samples: &[S2dSample], toy: &ToyDataset, assets: &TopologyAssets, c: &TrainConfig, resume: Option<Checkpoint>) -> TrainOutcome {
    let data = S2dData {
        train: samples,
        val: &[],
        neutrals: &toy.neutrals,
        assets,
    };
    train_s2d(model, data, c, resume).unwrap()
}

#[test]
fn s2l_one_epoch_history() {
    let t = toy();
    let (model, samples, spec) = s2l_setup(&t);
    let out = run_s2l(&model, &samples, &spec, &cfg(1, 1e-3, 2), None);
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.history[0].terms.len(), 5);
    assert_eq!(&out.term_names[..4], &["rec", "mouth", "cos", "vel"]);
    assert!(out.history[0].val_de.is_some());
    assert_eq!(out.history[0].step, 2);
    let csv = out.history_csv();
    assert_eq!(csv.lines().next().unwrap(), "epoch,step,rec,mouth,cos,vel,total,val_de");
}

#[test]
fn lr_zero_leaves_parameters() {
    let t = toy();
    let (model, samples, spec) = s2l_setup(&t);
    let out = run_s2l(&model, &samples, &spec, &cfg(1, 0.0, 3), None);
    assert_eq!(out.params, model.init_params(&mut init_rng(7)));
    let (dm, ds, assets) = s2d_setup(&t);
    let out = run_s2d(&dm, &ds, &t, &assets, &TrainConfig { learning_rate: 0.0, ..cfg(1, 0.0, 8) }, None);
    assert_eq!(out.params, dm.init_params(&mut init_rng(7)));
}

#[test]
fn s2l_resume_matches_uninterrupted() {
    let t = toy();
    let (model, samples, spec) = s2l_setup(&t);
    let full = run_s2l(&model, &samples, &spec, &cfg(3, 1e-3, 2), None);
    let first = run_s2l(&model, &samples, &spec, &cfg(2, 1e-3, 2), None);
    let resumed = run_s2l(&model, &samples, &spec, &cfg(3, 1e-3, 2), Some(first.last.clone()));
    assert_eq!(resumed.history, full.history);
    assert_eq!(resumed.params, full.params);
    // interrupted mid-epoch
    let part = run_s2l(&model, &samples, &spec, &TrainConfig { max_steps: Some(3), ..cfg(3, 1e-3, 2) }, None);
    assert_eq!(part.last.header.progress.batch, 1);
    let resumed = run_s2l(&model, &samples, &spec, &cfg(3, 1e-3, 2), Some(Checkpoint::from_bytes(&part.last.to_bytes()).unwrap()));
    assert_eq!(resumed.history, full.history);
}

#[test]
fn s2d_resume_matches_uninterrupted() {
    let t = toy();
    let (model, samples, assets) = s2d_setup(&t);
    let full = run_s2d(&model, &samples, &t, &assets, &cfg(2, 1e-3, 8), None);
    let first = run_s2d(&model, &samples, &t, &assets, &cfg(1, 1e-3, 8), None);
    let resumed = run_s2d(&model, &samples, &t, &assets, &cfg(2, 1e-3, 8), Some(first.last));
    assert_eq!(resumed.history, full.history);
    assert_eq!(full.history[0].terms.len(), 4);
}

#[test]
fn checkpoints_and_history_written() {
    let t = toy();
    let (model, samples, assets) = s2d_setup(&t);
    let dir = tempfile::tempdir().unwrap();
    let c = TrainConfig {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..cfg(2, 1e-3, 8)
    };
    let out = run_s2d(&model, &samples, &t, &assets, &c, None);
    let (last, best, csv) = checkpoint_paths(dir.path(), "s2d");
    let ck = Checkpoint::load(&last).unwrap();
    assert_eq!(ck.params, out.params);
    assert!(ck.optimizer().is_some());
    let b = Checkpoint::load(&best).unwrap();
    assert!(b.moments.is_none());
    assert_eq!(b.header.best_val, out.best_val);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 3);
    assert!(ck.check_topology(&assets.content_hash()).is_ok());
}

#[test]
fn deterministic_runs() {
    let t = toy();
    let (model, samples, spec) = s2l_setup(&t);
    let a = run_s2l(&model, &samples, &spec, &cfg(2, 1e-3, 2), None);
    let b = run_s2l(&model, &samples, &spec, &cfg(2, 1e-3, 2), None);
    assert_eq!(a.history, b.history);
}

#[test]
fn nan_aborts_with_term() {
    let t = toy();
    let (model, mut samples, spec) = s2l_setup(&t);
    samples[0].displacements[[0, 0, 0]] = f64::NAN;
    for s in samples.iter_mut().skip(1) {
        s.displacements[[0, 0, 0]] = f64::NAN;
    }
    let data = S2lData {
        train: &samples,
        val: &[],
        encoder: &spec,
        topology_hash: None,
    };
    let err = train_s2l(&model, data, &cfg(1, 1e-3, 3), None).unwrap_err();
    match err {
        Error::NonFinite { term, epoch, batch } => {
            assert_eq!(term, "rec");
            assert_eq!((epoch, batch), (1, 0));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn resume_rejects_other_model() {
    let t = toy();
    let (model, samples, spec) = s2l_setup(&t);
    let first = run_s2l(&model, &samples, &spec, &cfg(1, 1e-3, 2), None);
    let mut other_cfg = model.config.clone();
    other_cfg.hidden_size = 6;
    let other = S2lModel::new(other_cfg).unwrap();
    let data = S2lData {
        train: &samples,
        val: &[],
        encoder: &spec,
        topology_hash: None,
    };
    assert!(train_s2l(&other, data, &cfg(2, 1e-3, 2), Some(first.last)).is_err());
}
