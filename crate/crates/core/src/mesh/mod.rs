//! Fixed-topology face meshes and the topology-level assets the decoder
//! needs: landmark indexing, spiral neighbourhoods, the decimation hierarchy
//! and landmark-proximity vertex weights.

mod adjacency;
pub mod asset;
pub mod decimate;
pub mod hierarchy;
pub mod io;
pub mod primitives;
pub mod sparse;
pub mod spiral;
pub mod weights;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adjacency::Adjacency;
pub use asset::TopologyAssets;
pub use hierarchy::{build_sampling_hierarchy, SamplingHierarchy};
pub use io::{load_mesh, save_mesh};
pub use sparse::SparseMatrix;
pub use spiral::{compute_spirals, SpiralIndexTable, SPIRAL_PAD};
pub use weights::{compute_landmark_weights, VertexWeights};

/// Triangle mesh with vertex positions in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Mesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
        }
        let m = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= m) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad}, mesh has {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Vertex positions as an `M x 3` array.
    pub fn positions(&self) -> Array2<f64> {
        points_to_array(&self.vertices)
    }

    /// Same faces, new positions taken from an `M x 3` array.
    pub fn with_positions(&self, positions: &Array2<f64>) -> Result<Mesh> {
        if positions.dim() != (self.vertices.len(), 3) {
            return Err(Error::Shape(format!(
                "expected {}x3 positions, got {:?}",
                self.vertices.len(),
                positions.dim()
            )));
        }
        Mesh::new(array_to_points(positions), self.faces.clone())
    }
}

pub(crate) fn points_to_array(points: &[[f64; 3]]) -> Array2<f64> {
    let mut out = Array2::zeros((points.len(), 3));
    for (mut row, p) in out.rows_mut().into_iter().zip(points) {
        row[0] = p[0];
        row[1] = p[1];
        row[2] = p[2];
    }
    out
}

pub(crate) fn array_to_points(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

/// Connectivity shared by every mesh of a dataset, plus the landmark
/// conventions used by the losses and metrics.
///
/// `mouth_jaw_indices` and `lip_indices` index into the landmark array, not
/// into the mesh. `lip_vertex_indices` selects the lip region on dense meshes
/// and defaults to the lip landmarks' vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub vertex_count: usize,
    pub faces: Vec<[usize; 3]>,
    pub landmark_indices: Vec<usize>,
    pub mouth_jaw_indices: Vec<usize>,
    pub lip_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_vertex_indices: Option<Vec<usize>>,
}

/// iBUG 68-point groups: jaw contour 0..=16 and mouth 48..=67.
pub fn ibug68_mouth_jaw() -> Vec<usize> {
    (0..=16).chain(48..=67).collect()
}

/// iBUG 68-point lip landmarks (outer and inner lip contours).
pub fn ibug68_lips() -> Vec<usize> {
    (48..=67).collect()
}

impl Topology {
    pub fn new(
        vertex_count: usize,
        faces: Vec<[usize; 3]>,
        landmark_indices: Vec<usize>,
        mouth_jaw_indices: Vec<usize>,
        lip_indices: Vec<usize>,
    ) -> Result<Self> {
        let topo = Topology {
            vertex_count,
            faces,
            landmark_indices,
            mouth_jaw_indices,
            lip_indices,
            lip_vertex_indices: None,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Topology with the iBUG 68 mouth/jaw and lip groups.
    pub fn ibug68(vertex_count: usize, faces: Vec<[usize; 3]>, landmark_indices: Vec<usize>) -> Result<Self> {
        if landmark_indices.len() != 68 {
            return Err(Error::InvalidTopology(format!(
                "iBUG convention needs 68 landmarks, got {}",
                landmark_indices.len()
            )));
        }
        Self::new(vertex_count, faces, landmark_indices, ibug68_mouth_jaw(), ibug68_lips())
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_indices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.vertex_count;
        if m == 0 {
            return Err(Error::InvalidTopology("vertex_count is zero".into()));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= m) {
                return Err(Error::InvalidTopology(format!("face {fi} out of range")));
            }
        }
        if self.landmark_indices.is_empty() {
            return Err(Error::InvalidTopology("no landmarks".into()));
        }
        let mut seen = vec![false; m];
        for &i in &self.landmark_indices {
            if i >= m {
                return Err(Error::InvalidTopology(format!("landmark vertex {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidTopology(format!("landmark vertex {i} listed twice")));
            }
        }
        let l = self.landmark_count();
        if let Some(&bad) = self.mouth_jaw_indices.iter().find(|&&i| i >= l) {
            return Err(Error::InvalidTopology(format!("mouth/jaw index {bad} >= landmark count {l}")));
        }
        if self.lip_indices.is_empty() {
            return Err(Error::InvalidTopology("lip index set is empty".into()));
        }
        if let Some(&bad) = self.lip_indices.iter().find(|&&i| i >= l) {
            return Err(Error::InvalidTopology(format!("lip index {bad} >= landmark count {l}")));
        }
        if let Some(lv) = &self.lip_vertex_indices {
            if lv.is_empty() || lv.iter().any(|&i| i >= m) {
                return Err(Error::InvalidTopology("invalid lip vertex indices".into()));
            }
        }
        Ok(())
    }

    /// Vertex indices used for the dense lips error.
    pub fn lip_vertices(&self) -> Vec<usize> {
        match &self.lip_vertex_indices {
            Some(v) => v.clone(),
            None => self.lip_indices.iter().map(|&i| self.landmark_indices[i]).collect(),
        }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if mesh.vertex_count() != self.vertex_count {
            return Err(Error::Shape(format!(
                "mesh has {} vertices, topology expects {}",
                mesh.vertex_count(),
                self.vertex_count
            )));
        }
        Ok(())
    }
}

/// Landmark positions (`L x 3`), rows in `landmark_indices` order.
pub fn extract_landmarks(mesh: &Mesh, topo: &Topology) -> Result<Array2<f64>> {
    topo.check_mesh(mesh)?;
    let mut out = Array2::zeros((topo.landmark_count(), 3));
    for (mut row, &vi) in out.rows_mut().into_iter().zip(&topo.landmark_indices) {
        let p = mesh.vertices[vi];
        row[0] = p[0];
        row[1] = p[1];
        row[2] = p[2];
    }
    Ok(out)
}

/// Gathers rows `indices` of an `N x 3` array.
pub fn gather_rows(points: &ndarray::ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    points.select(ndarray::Axis(0), indices)
}
