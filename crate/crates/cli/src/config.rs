//! Run configuration: one TOML file, every section optional. Command-line
//! flags override whatever the file sets.

use std::path::{Path, PathBuf};

use lipfield::audio::EncoderSpec;
use lipfield::data::ToyConfig;
use lipfield::s2d::S2dConfig;
use lipfield::s2l::S2lConfig;
use lipfield::train::TrainConfig;
use lipfield::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub fps: f64,
    pub encoder: EncoderSpec,
    pub data: DataSection,
    pub topology: TopologySection,
    pub toy: ToyConfig,
    pub s2l: S2lConfig,
    pub s2d: S2dConfig,
    pub train_s2l: TrainConfig,
    pub train_s2d: TrainConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: None,
            fps: lipfield::pipeline::DEFAULT_FPS,
            encoder: EncoderSpec::default(),
            data: DataSection::default(),
            topology: TopologySection::default(),
            toy: ToyConfig::default(),
            s2l: S2lConfig::default(),
            s2d: S2dConfig::default(),
            train_s2l: TrainConfig::s2l(),
            train_s2d: TrainConfig::s2d(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    /// Subjects for train / validation / test; all subjects train when unset.
    pub split: Option<[usize; 3]>,
    pub split_seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub path: Option<PathBuf>,
    pub factors: Vec<f64>,
    pub spiral_length: usize,
    pub dilation: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            path: None,
            factors: vec![0.25, 0.25, 0.5, 0.5, 0.5],
            spiral_length: 9,
            dilation: 1,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse("config", e.message().to_string()))
    }
}
