//! Reader for the published VOCAset directory layout:
//!
//! ```text
//! root/audio/<subject>/<sentence>.wav
//! root/<meshes>/<subject>/<sentence>/*.ply      meshes = unposedcleaneddata | registereddata
//! root/templates/<subject>.ply                  optional neutral scans
//! ```
//!
//! Coordinates are multiplied by `unit_scale` (metres to millimetres by
//! default).

use std::path::{Path, PathBuf};

use super::disk::{frames_from_meshes, DiskDataset};
use super::{Neutrals, TalkingSequence};
use crate::audio::read_wav;
use crate::mesh::{load_mesh, Mesh};
use crate::{Error, Result};

pub const VOCASET_FPS: f64 = 60.0;
pub const METRES_TO_MM: f64 = 1000.0;

fn sorted_entries(dir: &Path, want_dir: bool) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() == want_dir)
        .collect();
    out.sort();
    Ok(out)
}

fn name(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn mesh_root(root: &Path) -> Option<PathBuf> {
    ["unposedcleaneddata", "registereddata"]
        .iter()
        .map(|d| root.join(d))
        .find(|p| p.is_dir())
}

/// True when `root` looks like a VOCAset download.
pub fn is_vocaset(root: &Path) -> bool {
    root.join("audio").is_dir() && mesh_root(root).is_some()
}

pub fn load_vocaset(root: &Path, unit_scale: f64) -> Result<DiskDataset> {
    let meshes = mesh_root(root).ok_or_else(|| Error::Data(format!("{}: no mesh directory found", root.display())))?;
    let mut sequences = Vec::new();
    for subject_dir in sorted_entries(&meshes, true)? {
        let subject = name(&subject_dir);
        for sentence_dir in sorted_entries(&subject_dir, true)? {
            let sentence = name(&sentence_dir);
            let wav = root.join("audio").join(&subject).join(format!("{sentence}.wav"));
            if !wav.exists() {
                log::warn!("skipping {subject}/{sentence}: no audio");
                continue;
            }
            let plys: Vec<PathBuf> = sorted_entries(&sentence_dir, false)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
                .collect();
            if plys.is_empty() {
                continue;
            }
            sequences.push(TalkingSequence {
                audio: read_wav(&wav)?,
                frames: frames_from_meshes(&plys, unit_scale)?,
                fps: VOCASET_FPS,
                subject_id: subject.clone(),
                sentence_id: sentence,
            });
        }
    }
    let mut neutrals = Neutrals::new();
    let templates = root.join("templates");
    if templates.is_dir() {
        for p in sorted_entries(&templates, false)? {
            if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")) {
                neutrals.insert(name(&p), load_mesh(&p)?.positions().mapv(|v| v * unit_scale));
            }
        }
    }
    if sequences.is_empty() {
        return Err(Error::Data(format!("{}: no sequences found", root.display())));
    }
    Ok(DiskDataset { sequences, neutrals })
}

/// First subject template, or else the first registered frame, in
/// millimetres; supplies the faces and the hierarchy reference.
pub fn reference_mesh(root: &Path, unit_scale: f64) -> Result<Mesh> {
    let templates = root.join("templates");
    let mut candidate = None;
    if templates.is_dir() {
        candidate = sorted_entries(&templates, false)?
            .into_iter()
            .find(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")));
    }
    if candidate.is_none() {
        let meshes = mesh_root(root).ok_or_else(|| Error::Data(format!("{}: no mesh directory found", root.display())))?;
        'outer: for subject_dir in sorted_entries(&meshes, true)? {
            for sentence_dir in sorted_entries(&subject_dir, true)? {
                if let Some(p) = sorted_entries(&sentence_dir, false)?
                    .into_iter()
                    .find(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
                {
                    candidate = Some(p);
                    break 'outer;
                }
            }
        }
    }
    let path = candidate.ok_or_else(|| Error::Data(format!("{}: no mesh found", root.display())))?;
    let mesh = load_mesh(&path)?;
    let vertices = mesh.vertices.iter().map(|v| v.map(|c| c * unit_scale)).collect();
    Mesh::new(vertices, mesh.faces)
}
