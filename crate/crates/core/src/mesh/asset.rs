//! Topology asset file: landmark conventions, the reference mesh, the
//! sampling hierarchy and spiral parameters, serialised as JSON.
//!
//! Checkpoints of the dense decoder record [`TopologyAssets::content_hash`]
//! so they refuse to load against different assets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_sampling_hierarchy, compute_landmark_weights, compute_spirals, Mesh, SamplingHierarchy, SpiralIndexTable,
    Topology, VertexWeights,
};
use crate::{Error, Result};

const FORMAT: &str = "lipfield-topology";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyAssets {
    pub format: String,
    pub version: u32,
    pub topology: Topology,
    /// Template mesh the hierarchy and weights were derived from.
    pub reference_vertices: Vec<[f64; 3]>,
    pub hierarchy: SamplingHierarchy,
    /// Spiral length per hierarchy level (level 0 first).
    pub spiral_lengths: Vec<usize>,
    pub dilations: Vec<usize>,
    pub weight_eps: f64,
}

impl TopologyAssets {
    pub fn build(
        topology: Topology,
        reference: &Mesh,
        factors: &[f64],
        spiral_length: usize,
        dilation: usize,
    ) -> Result<Self> {
        topology.validate()?;
        topology.check_mesh(reference)?;
        if reference.faces != topology.faces {
            return Err(Error::InvalidTopology("reference mesh faces differ from topology".into()));
        }
        let hierarchy = build_sampling_hierarchy(reference, factors)?;
        let levels = hierarchy.level_sizes.len();
        let assets = TopologyAssets {
            format: FORMAT.into(),
            version: VERSION,
            topology,
            reference_vertices: reference.vertices.clone(),
            hierarchy,
            spiral_lengths: vec![spiral_length; levels],
            dilations: vec![dilation; levels],
            weight_eps: super::weights::DEFAULT_WEIGHT_EPS,
        };
        assets.validate()?;
        Ok(assets)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::InvalidTopology(format!(
                "unsupported asset format {} v{}",
                self.format, self.version
            )));
        }
        self.topology.validate()?;
        self.hierarchy.validate()?;
        if self.hierarchy.level_sizes[0] != self.topology.vertex_count
            || self.reference_vertices.len() != self.topology.vertex_count
        {
            return Err(Error::InvalidTopology("hierarchy/reference size differs from topology".into()));
        }
        if self.hierarchy.level_faces[0] != self.topology.faces {
            return Err(Error::InvalidTopology("hierarchy level 0 faces differ from topology".into()));
        }
        let levels = self.hierarchy.level_sizes.len();
        if self.spiral_lengths.len() != levels || self.dilations.len() != levels {
            return Err(Error::InvalidTopology("spiral parameters must cover every level".into()));
        }
        if self.spiral_lengths.iter().chain(&self.dilations).any(|&x| x == 0) {
            return Err(Error::InvalidTopology("spiral length and dilation must be positive".into()));
        }
        if !(self.weight_eps > 0.0) {
            return Err(Error::InvalidTopology("weight_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn reference_mesh(&self) -> Result<Mesh> {
        Mesh::new(self.reference_vertices.clone(), self.topology.faces.clone())
    }

    pub fn spirals(&self) -> Result<Vec<SpiralIndexTable>> {
        (0..self.hierarchy.level_sizes.len())
            .map(|k| {
                compute_spirals(
                    self.hierarchy.level_sizes[k],
                    &self.hierarchy.level_faces[k],
                    self.spiral_lengths[k],
                    self.dilations[k],
                )
            })
            .collect()
    }

    pub fn weights(&self) -> Result<VertexWeights> {
        compute_landmark_weights(&self.reference_mesh()?, &self.topology, self.weight_eps)
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("assets serialise");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("assets serialise")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let assets: TopologyAssets =
            serde_json::from_slice(bytes).map_err(|e| Error::parse("topology asset", e.to_string()))?;
        assets.validate()?;
        Ok(assets)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::train::checkpoint::write_atomic(path, &self.to_json())
    }
}
