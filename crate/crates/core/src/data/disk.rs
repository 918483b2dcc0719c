//! Dataset directory layout:
//!
//! ```text
//! root/dataset.json           sequence index and neutral paths
//! root/topology.json          topology assets (optional)
//! root/neutrals/<subject>.ply
//! root/sequences/<subject>__<sentence>/audio.wav
//! root/sequences/<subject>__<sentence>/frames.lms   (or frames/*.ply)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{Neutrals, TalkingSequence};
use crate::audio::{read_wav, write_wav};
use crate::container::MotionContainer;
use crate::mesh::{load_mesh, save_mesh, Mesh};
use crate::{Error, Result};

const FORMAT: &str = "lipfield-dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Index {
    format: String,
    version: u32,
    sequences: Vec<IndexEntry>,
    #[serde(default)]
    neutrals: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    dir: PathBuf,
    subject_id: String,
    sentence_id: String,
    fps: f64,
}

#[derive(Clone, Debug)]
pub struct DiskDataset {
    pub sequences: Vec<TalkingSequence>,
    pub neutrals: Neutrals,
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes sequences and neutrals below `root`. `faces` is used for the
/// neutral PLY files.
pub fn save_dataset(root: &Path, sequences: &[TalkingSequence], neutrals: &Neutrals, faces: &[[usize; 3]]) -> Result<()> {
    mkdir(&root.join("sequences"))?;
    mkdir(&root.join("neutrals"))?;
    let mut index = Index {
        format: FORMAT.into(),
        version: 1,
        sequences: Vec::new(),
        neutrals: BTreeMap::new(),
    };
    for sq in sequences {
        let rel = PathBuf::from("sequences").join(format!("{}__{}", sq.subject_id, sq.sentence_id));
        let dir = root.join(&rel);
        mkdir(&dir)?;
        write_wav(dir.join("audio.wav"), &sq.audio)?;
        MotionContainer::from_frames(&sq.frames, sq.fps)?.write(dir.join("frames.lms"))?;
        index.sequences.push(IndexEntry {
            dir: rel,
            subject_id: sq.subject_id.clone(),
            sentence_id: sq.sentence_id.clone(),
            fps: sq.fps,
        });
    }
    for (subject, n) in neutrals {
        let rel = PathBuf::from("neutrals").join(format!("{subject}.ply"));
        let mesh = Mesh::new(crate::mesh::array_to_points(n), faces.to_vec())?;
        save_mesh(root.join(&rel), &mesh)?;
        index.neutrals.insert(subject.clone(), rel);
    }
    let json = serde_json::to_vec_pretty(&index).expect("index serialises");
    crate::train::checkpoint::write_atomic(&root.join("dataset.json"), &json)
}

fn load_frames(dir: &Path) -> Result<(Array3<f64>, Option<f32>)> {
    let lms = dir.join("frames.lms");
    if lms.exists() {
        let c = MotionContainer::read(&lms)?;
        return Ok((c.frames(), Some(c.fps)));
    }
    let fdir = dir.join("frames");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&fdir)
        .map_err(|e| Error::io(&fdir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
        .collect();
    paths.sort();
    frames_from_meshes(&paths, 1.0).map(|f| (f, None))
}

/// Stacks equally sized meshes into `K x M x 3`, scaling coordinates.
pub(crate) fn frames_from_meshes(paths: &[PathBuf], scale: f64) -> Result<Array3<f64>> {
    let meshes = paths.iter().map(load_mesh).collect::<Result<Vec<_>>>()?;
    let first = meshes
        .first()
        .ok_or_else(|| Error::Data("sequence has no frames".into()))?;
    let m = first.vertex_count();
    let mut frames = Array3::zeros((meshes.len(), m, 3));
    for (k, mesh) in meshes.iter().enumerate() {
        if mesh.vertex_count() != m {
            return Err(Error::Data(format!("{}: vertex count differs from first frame", paths[k].display())));
        }
        for (i, v) in mesh.vertices.iter().enumerate() {
            for c in 0..3 {
                frames[[k, i, c]] = v[c] * scale;
            }
        }
    }
    Ok(frames)
}

pub fn load_dataset(root: &Path) -> Result<DiskDataset> {
    let ipath = root.join("dataset.json");
    let bytes = std::fs::read(&ipath).map_err(|e| Error::io(&ipath, e))?;
    let index: Index = serde_json::from_slice(&bytes).map_err(|e| Error::parse("dataset index", e.to_string()))?;
    if index.format != FORMAT {
        return Err(Error::Data(format!("{} is not a dataset index", ipath.display())));
    }
    let mut sequences = Vec::new();
    for e in &index.sequences {
        let dir = root.join(&e.dir);
        let audio = read_wav(dir.join("audio.wav"))?;
        let (frames, _) = load_frames(&dir)?;
        sequences.push(TalkingSequence {
            audio,
            frames,
            fps: e.fps,
            subject_id: e.subject_id.clone(),
            sentence_id: e.sentence_id.clone(),
        });
    }
    let mut neutrals = Neutrals::new();
    for (subject, rel) in &index.neutrals {
        neutrals.insert(subject.clone(), load_mesh(root.join(rel))?.positions());
    }
    Ok(DiskDataset { sequences, neutrals })
}
