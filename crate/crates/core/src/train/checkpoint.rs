//! `LCKP` checkpoint files: magic, version, a length-prefixed JSON header and
//! raw little-endian `f64` payloads (parameters, then optionally the Adam
//! first and second moments).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, Progress, TrainConfig};
use crate::audio::EncoderSpec;
use crate::nn::{Adam, AdamConfig, ParamLayout};
use crate::s2d::S2dConfig;
use crate::s2l::S2lConfig;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCKP";
pub const VERSION: u32 = 1;
/// Largest accepted JSON header.
const MAX_HEADER: u64 = 64 << 20;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".into(),
    });
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    S2l { config: S2lConfig, encoder: EncoderSpec },
    S2d { config: S2dConfig },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::S2l { .. } => "s2l",
            ModelSpec::S2d { .. } => "s2d",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelSpec,
    /// Content hash of the topology assets the model was trained against.
    pub topology_hash: Option<String>,
    pub layout: ParamLayout,
    pub train: TrainConfig,
    pub progress: Progress,
    pub adam: Option<AdamState>,
    pub best_val: Option<f64>,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
    /// Adam moments, present when `header.adam` is.
    pub moments: Option<(Vec<f64>, Vec<f64>)>,
}

fn push_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

impl Checkpoint {
    pub fn optimizer(&self) -> Option<Adam> {
        match (&self.header.adam, &self.moments) {
            (Some(s), Some((m, v))) => Some(Adam {
                config: s.config,
                t: s.t,
                m: m.clone(),
                v: v.clone(),
            }),
            _ => None,
        }
    }

    /// Drops optimizer state, leaving an inference-only checkpoint.
    pub fn without_optimizer(mut self) -> Self {
        self.header.adam = None;
        self.moments = None;
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let n = self.params.len();
        let blocks = if self.moments.is_some() { 3 } else { 1 };
        let mut out = Vec::with_capacity(16 + header.len() + blocks * n * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        push_f64s(&mut out, &self.params);
        if let Some((m, v)) = &self.moments {
            push_f64s(&mut out, m);
            push_f64s(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        if hlen > MAX_HEADER || hlen > (bytes.len() - 16) as u64 {
            return Err(bad("truncated header"));
        }
        let hend = 16 + hlen as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..hend]).map_err(|e| Error::parse("checkpoint header", e.to_string()))?;
        let n = header.layout.total();
        let blocks: u64 = if header.adam.is_some() { 3 } else { 1 };
        let payload = &bytes[hend..];
        if (n as u64).checked_mul(8 * blocks) != Some(payload.len() as u64) {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, layout needs {} x {n} values",
                payload.len(),
                blocks
            )));
        }
        let params = read_f64s(&payload[..n * 8]);
        let moments = (blocks == 3).then(|| (read_f64s(&payload[n * 8..2 * n * 8]), read_f64s(&payload[2 * n * 8..])));
        Ok(Checkpoint { header, params, moments })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn check_topology(&self, assets_hash: &str) -> Result<()> {
        match &self.header.topology_hash {
            Some(h) if h != assets_hash => Err(Error::TopologyMismatch {
                expected: h.clone(),
                found: assets_hash.to_string(),
            }),
            _ => Ok(()),
        }
    }

    pub fn s2l_config(&self) -> Result<(&S2lConfig, &EncoderSpec)> {
        match &self.header.model {
            ModelSpec::S2l { config, encoder } => Ok((config, encoder)),
            m => Err(Error::Checkpoint(format!("expected an s2l checkpoint, found {}", m.kind()))),
        }
    }

    pub fn s2d_config(&self) -> Result<&S2dConfig> {
        match &self.header.model {
            ModelSpec::S2d { config } => Ok(config),
            m => Err(Error::Checkpoint(format!("expected an s2d checkpoint, found {}", m.kind()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamLayout;

    fn sample(with_opt: bool) -> Checkpoint {
        let mut layout = ParamLayout::new();
        layout.add("a", &[2, 3]);
        layout.add("b", &[1]);
        let params: Vec<f64> = (0..7).map(|i| i as f64 / 3.0).collect();
        Checkpoint {
            header: CheckpointHeader {
                model: ModelSpec::S2d {
                    config: S2dConfig::default(),
                },
                topology_hash: Some("abc".into()),
                layout,
                train: TrainConfig::default(),
                progress: Progress::default(),
                adam: with_opt.then(|| AdamState {
                    config: AdamConfig::with_lr(1e-3),
                    t: 5,
                }),
                best_val: Some(0.25),
                history: vec![],
            },
            moments: with_opt.then(|| (vec![0.1; 7], vec![f64::MIN_POSITIVE; 7])),
            params,
        }
    }

    #[test]
    fn roundtrip_exact() {
        for opt in [false, true] {
            let c = sample(opt);
            assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.lckp");
        sample(true).save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), sample(true));
        assert_eq!(Checkpoint::load(&p).unwrap().without_optimizer(), sample(false));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(true).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"LCKP").is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(Checkpoint::from_bytes(&b).is_err());
        let mut b = bytes.clone();
        b[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Checkpoint::from_bytes(&b).is_err());
    }

    #[test]
    fn topology_check() {
        let c = sample(false);
        assert!(c.check_topology("abc").is_ok());
        assert!(matches!(c.check_topology("def"), Err(Error::TopologyMismatch { .. })));
        assert!(c.s2l_config().is_err());
    }
}
