use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lipfield::audio::{read_wav, EncoderSpec};
use lipfield::data::vocaset::{is_vocaset, load_vocaset, reference_mesh, METRES_TO_MM};
use lipfield::data::{
    build_s2d_dataset, build_s2l_dataset, generate_toy_dataset, load_dataset, resolve_neutrals, save_dataset,
    split_by_subject, DiskDataset, Split, TalkingSequence,
};
use lipfield::eval::EvalReport;
use lipfield::mesh::{load_mesh, save_mesh, Topology, TopologyAssets};
use lipfield::pipeline::{evaluate_pipeline, evaluate_predictions, Pipeline};
use lipfield::render::{render_frames, RenderConfig};
use lipfield::s2d::S2dModel;
use lipfield::s2l::S2lModel;
use lipfield::train::{train_s2d, train_s2l, write_text, Checkpoint, S2dData, S2lData, TrainConfig};
use lipfield::{container::MotionContainer, Error, Result};

use crate::config::FileConfig;
use crate::{Cli, Command, EncoderKind, GlobalArgs};

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Generate the synthetic toy dataset.
    #[arg(long, conflicts_with = "vocaset")]
    pub toy: bool,
    /// Convert a VOCAset download.
    #[arg(long)]
    pub vocaset: Option<PathBuf>,
    /// JSON array of the 68 landmark vertex indices (VOCAset only).
    #[arg(long, requires = "vocaset")]
    pub landmarks: Option<PathBuf>,
    #[arg(long, default_value_t = METRES_TO_MM)]
    pub unit_scale: f64,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `prepare-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Continue from a `*_last.lckp` checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnimateArgs {
    #[arg(long)]
    pub audio: PathBuf,
    /// Neutral face mesh; the topology's reference mesh when omitted.
    #[arg(long)]
    pub neutral: Option<PathBuf>,
    /// Also write one PLY per frame here.
    #[arg(long)]
    pub ply_dir: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Score a dataset directory of predicted sequences instead of running
    /// the checkpoints.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitName>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Motion container to render.
    #[arg(long)]
    pub input: PathBuf,
    /// Mesh supplying the faces; the topology's faces when omitted.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
}

struct Ctx {
    global: GlobalArgs,
    cfg: FileConfig,
}

impl Ctx {
    fn seed(&self) -> Option<u64> {
        self.global.seed.or(self.cfg.seed)
    }

    fn fps(&self) -> f64 {
        self.global.fps.unwrap_or(self.cfg.fps)
    }

    fn out(&self) -> Result<&Path> {
        self.global
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }

    fn encoder(&self) -> EncoderSpec {
        match (self.global.encoder, &self.cfg.encoder) {
            (Some(EncoderKind::Pretrained), EncoderSpec::Spectrogram(_)) => EncoderSpec::pretrained(),
            (Some(EncoderKind::Spectrogram), EncoderSpec::Pretrained { .. }) => EncoderSpec::default(),
            (_, spec) => spec.clone(),
        }
    }

    fn data_root(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.cfg.data.root.clone())
            .ok_or_else(|| Error::Config("no dataset given (--data or [data] root)".into()))
    }

    fn topology_path(&self, data_root: Option<&Path>) -> Result<PathBuf> {
        self.global
            .topology
            .clone()
            .or_else(|| self.cfg.topology.path.clone())
            .or_else(|| data_root.map(|d| d.join("topology.json")))
            .ok_or_else(|| Error::Config("no topology given (--topology or [topology] path)".into()))
    }

    fn checkpoint(&self, which: &str) -> Result<PathBuf> {
        let p = match which {
            "s2l" => &self.global.checkpoint_s2l,
            _ => &self.global.checkpoint_s2d,
        };
        p.clone()
            .ok_or_else(|| Error::Config(format!("--checkpoint-{which} is required")))
    }

    fn split(&self, ds: &DiskDataset) -> Result<Split<TalkingSequence>> {
        match self.cfg.data.split {
            Some([tr, va, te]) => split_by_subject(&ds.sequences, tr, va, te, self.cfg.data.split_seed),
            None => Ok(Split {
                train: ds.sequences.clone(),
                val: Vec::new(),
                test: Vec::new(),
            }),
        }
    }

    fn train_config(&self, base: &TrainConfig, args: &TrainArgs) -> Result<TrainConfig> {
        let mut c = base.clone();
        if let Some(s) = self.seed() {
            c.seed = s;
        }
        if let Some(e) = args.epochs {
            c.epochs = e;
        }
        if args.max_steps.is_some() {
            c.max_steps = args.max_steps;
        }
        if let Some(lr) = args.lr {
            c.learning_rate = lr;
        }
        if let Some(b) = args.batch_size {
            c.batch_size = b;
        }
        c.checkpoint_dir = Some(self.out()?.to_path_buf());
        c.validate()?;
        Ok(c)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.global.config.as_deref())?;
    let ctx = Ctx { global: cli.global, cfg };
    match cli.command {
        Command::PrepareData(a) => prepare(&ctx, &a),
        Command::TrainS2l(a) => train_landmarks(&ctx, &a),
        Command::TrainS2d(a) => train_dense(&ctx, &a),
        Command::Animate(a) => animate(&ctx, &a),
        Command::Evaluate(a) => evaluate(&ctx, &a),
        Command::RenderFrames(a) => render(&ctx, &a),
    }
}

fn prepare(ctx: &Ctx, a: &PrepareArgs) -> Result<()> {
    let out = ctx.out()?;
    let t = &ctx.cfg.topology;
    let (ds, reference, topology) = if let Some(root) = &a.vocaset {
        if !is_vocaset(root) {
            return Err(Error::Data(format!("{} does not look like a VOCAset download", root.display())));
        }
        let lm_path = a
            .landmarks
            .as_ref()
            .ok_or_else(|| Error::Config("--landmarks is required with --vocaset".into()))?;
        let text = std::fs::read(lm_path).map_err(|e| Error::io(lm_path, e))?;
        let landmarks: Vec<usize> =
            serde_json::from_slice(&text).map_err(|e| Error::parse("landmark list", e.to_string()))?;
        let ds = load_vocaset(root, a.unit_scale)?;
        let reference = reference_mesh(root, a.unit_scale)?;
        let topology = Topology::ibug68(reference.vertex_count(), reference.faces.clone(), landmarks)?;
        (ds, reference, topology)
    } else if a.toy {
        let mut toy_cfg = ctx.cfg.toy.clone();
        if let Some(s) = ctx.seed() {
            toy_cfg.seed = s;
        }
        toy_cfg.n_subjects = a.subjects.unwrap_or(toy_cfg.n_subjects);
        toy_cfg.n_sentences = a.sentences.unwrap_or(toy_cfg.n_sentences);
        toy_cfg.duration = a.duration.unwrap_or(toy_cfg.duration);
        if let Some(fps) = ctx.global.fps {
            toy_cfg.fps = fps;
        }
        let toy = generate_toy_dataset(&toy_cfg)?;
        let ds = DiskDataset {
            sequences: toy.sequences,
            neutrals: toy.neutrals,
        };
        (ds, toy.reference, toy.topology)
    } else {
        return Err(Error::Config("prepare-data needs --toy or --vocaset".into()));
    };
    let assets = TopologyAssets::build(topology, &reference, &t.factors, t.spiral_length, t.dilation)?;
    let neutrals = resolve_neutrals(&ds.sequences, &ds.neutrals);
    save_dataset(out, &ds.sequences, &neutrals, &reference.faces)?;
    assets.save(out.join("topology.json"))?;
    save_mesh(out.join("reference.ply"), &reference)?;
    println!(
        "wrote {} sequences, {} subjects, topology levels {:?} to {}",
        ds.sequences.len(),
        neutrals.len(),
        assets.hierarchy.level_sizes,
        out.display()
    );
    Ok(())
}

fn load_data(ctx: &Ctx, data: &Option<PathBuf>) -> Result<(PathBuf, DiskDataset, TopologyAssets)> {
    let root = ctx.data_root(data)?;
    let ds = load_dataset(&root)?;
    let assets = TopologyAssets::load(ctx.topology_path(Some(&root))?)?;
    Ok((root, ds, assets))
}

fn load_resume(path: &Option<PathBuf>) -> Result<Option<Checkpoint>> {
    path.as_ref().map(Checkpoint::load).transpose()
}

fn train_landmarks(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let (_, ds, assets) = load_data(ctx, &a.data)?;
    let split = ctx.split(&ds)?;
    let spec = ctx.encoder();
    let encoder = spec.build()?;
    let topo = &assets.topology;
    let train = build_s2l_dataset(&split.train, topo, encoder.as_ref(), &ds.neutrals)?;
    let val = if split.val.is_empty() {
        Vec::new()
    } else {
        build_s2l_dataset(&split.val, topo, encoder.as_ref(), &ds.neutrals)?
    };
    let mut model_cfg = ctx.cfg.s2l.clone();
    model_cfg.input_channels = encoder.channels();
    model_cfg.landmark_count = topo.landmark_count();
    model_cfg.mouth_jaw_indices = topo.mouth_jaw_indices.clone();
    let model = S2lModel::new(model_cfg)?;
    let cfg = ctx.train_config(&ctx.cfg.train_s2l, a)?;
    let data = S2lData {
        train: &train,
        val: &val,
        encoder: &spec,
        topology_hash: Some(assets.content_hash()),
    };
    let out = train_s2l(&model, data, &cfg, load_resume(&a.resume)?)?;
    summary("s2l", &out.last, out.best_val);
    Ok(())
}

fn train_dense(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let (_, ds, assets) = load_data(ctx, &a.data)?;
    let split = ctx.split(&ds)?;
    let neutrals = resolve_neutrals(&ds.sequences, &ds.neutrals);
    let topo = &assets.topology;
    let train = build_s2d_dataset(&split.train, topo, &neutrals)?;
    let val = if split.val.is_empty() {
        Vec::new()
    } else {
        build_s2d_dataset(&split.val, topo, &neutrals)?
    };
    let mut model_cfg = ctx.cfg.s2d.clone();
    model_cfg.landmark_count = topo.landmark_count();
    let model = S2dModel::new(model_cfg, &assets)?;
    let cfg = ctx.train_config(&ctx.cfg.train_s2d, a)?;
    let data = S2dData {
        train: &train,
        val: &val,
        neutrals: &neutrals,
        assets: &assets,
    };
    let out = train_s2d(&model, data, &cfg, load_resume(&a.resume)?)?;
    summary("s2d", &out.last, out.best_val);
    Ok(())
}

fn summary(kind: &str, last: &Checkpoint, best: Option<f64>) {
    let p = &last.header.progress;
    let loss = last.header.history.last().and_then(|r| r.terms.last().copied());
    println!(
        "{kind}: {} epochs, {} steps, final loss {}, best val DE {}",
        p.epoch,
        p.step,
        loss.map_or("-".into(), |v| format!("{v:.6}")),
        best.map_or("-".into(), |v| format!("{v:.6} mm"))
    );
}

fn load_pipeline(ctx: &Ctx) -> Result<Pipeline> {
    let topo = ctx.topology_path(None)?;
    Pipeline::load(&ctx.checkpoint("s2l")?, &ctx.checkpoint("s2d")?, &topo, ctx.fps())
}

fn animate(ctx: &Ctx, a: &AnimateArgs) -> Result<()> {
    let out = ctx.out()?;
    let pipeline = load_pipeline(ctx)?;
    let wave = read_wav(&a.audio)?;
    let neutral = match &a.neutral {
        Some(p) => load_mesh(p)?,
        None => pipeline.assets.reference_mesh()?,
    };
    let anim = pipeline.animate(&wave, &neutral)?;
    let container = anim.to_container()?;
    container.write(out)?;
    if let Some(dir) = &a.ply_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for k in 0..container.frame_count {
            let mesh = lipfield::mesh::Mesh::new(container.frame(k), neutral.faces.clone())?;
            save_mesh(dir.join(format!("frame_{k:05}.ply")), &mesh)?;
        }
    }
    println!("wrote {} frames at {} fps to {}", container.frame_count, container.fps, out.display());
    Ok(())
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let (_, ds, assets) = load_data(ctx, &a.data)?;
    let split = ctx.split(&ds)?;
    let which = a.split.unwrap_or(if ctx.cfg.data.split.is_some() { SplitName::Test } else { SplitName::All });
    let (name, seqs) = match which {
        SplitName::All => ("all", ds.sequences.clone()),
        SplitName::Train => ("train", split.train),
        SplitName::Val => ("val", split.val),
        SplitName::Test => ("test", split.test),
    };
    if seqs.is_empty() {
        return Err(Error::Data(format!("split `{name}` has no sequences")));
    }
    let report: EvalReport = match &a.predictions {
        Some(p) => {
            let pred = load_dataset(p)?;
            evaluate_predictions(&pred.sequences, &seqs, &ds.neutrals, &assets, name)?
        }
        None => {
            let pipeline = load_pipeline_with(ctx, assets)?;
            evaluate_pipeline(&pipeline, &seqs, &ds.neutrals, name)?
        }
    };
    print!("{}", report.to_table());
    if let Some(out) = &ctx.global.out {
        write_text(out, &report.to_csv())?;
    }
    Ok(())
}

fn load_pipeline_with(ctx: &Ctx, assets: TopologyAssets) -> Result<Pipeline> {
    let s2l = Checkpoint::load(ctx.checkpoint("s2l")?)?;
    let s2d = Checkpoint::load(ctx.checkpoint("s2d")?)?;
    Pipeline::from_checkpoints(&s2l, &s2d, assets, ctx.fps())
}

fn render(ctx: &Ctx, a: &RenderArgs) -> Result<()> {
    let out = ctx.out()?;
    let seq = MotionContainer::read(&a.input)?;
    let faces = match &a.mesh {
        Some(m) => load_mesh(m)?.faces,
        None => TopologyAssets::load(ctx.topology_path(None)?)?.topology.faces,
    };
    let cfg = RenderConfig {
        width: a.width,
        height: a.height,
        ..RenderConfig::default()
    };
    let paths = render_frames(&seq, &faces, out, &cfg)?;
    println!("wrote {} frames to {}", paths.len(), out.display());
    Ok(())
}
