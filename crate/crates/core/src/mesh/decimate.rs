//! Quadric-error edge-collapse decimation.
//!
//! Collapses are half-edge collapses: the removed vertex merges into the
//! surviving endpoint, which keeps its original position. The coarse mesh
//! therefore uses a subset of the fine vertices, which makes the matching
//! down-sampling operator a plain selection matrix.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Result of decimating a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Decimation {
    /// Fine-level indices of the surviving vertices, ascending.
    pub kept: Vec<usize>,
    /// Faces re-indexed into `kept`.
    pub faces: Vec<[usize; 3]>,
}

const BOUNDARY_WEIGHT: f64 = 1e3;
const MIN_VERTICES: usize = 4;

#[derive(Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: [f64; 3], d: f64, w: f64) -> Self {
        let [a, b, c] = n;
        Quadric([
            w * a * a,
            w * a * b,
            w * a * c,
            w * a * d,
            w * b * b,
            w * b * c,
            w * b * d,
            w * c * c,
            w * c * d,
            w * d * d,
        ])
    }

    fn add(&mut self, o: &Quadric) {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
    }

    fn eval(&self, p: [f64; 3]) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy)]
struct Candidate {
    cost: f64,
    from: usize,
    to: usize,
    version_from: u32,
    version_to: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so the max-heap pops the cheapest collapse first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.from.cmp(&self.from))
            .then_with(|| other.to.cmp(&self.to))
    }
}

struct State<'a> {
    pos: &'a [[f64; 3]],
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    incident: Vec<Vec<usize>>,
    alive: Vec<bool>,
    quadric: Vec<Quadric>,
    version: Vec<u32>,
    heap: BinaryHeap<Candidate>,
}

impl State<'_> {
    fn faces_of(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().copied().filter(|&f| self.face_alive[f])
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .faces_of(v)
            .flat_map(|f| self.faces[f])
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn shared_faces(&self, u: usize, v: usize) -> Vec<usize> {
        self.faces_of(u).filter(|&f| self.faces[f].contains(&v)).collect()
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v).into_iter().any(|w| self.shared_faces(v, w).len() == 1)
    }

    fn push_edges_of(&mut self, v: usize) {
        for w in self.neighbors(v) {
            for (from, to) in [(v, w), (w, v)] {
                let mut q = self.quadric[from];
                q.add(&self.quadric[to]);
                self.heap.push(Candidate {
                    cost: q.eval(self.pos[to]).max(0.0),
                    from,
                    to,
                    version_from: self.version[from],
                    version_to: self.version[to],
                });
            }
        }
    }

    fn collapse_is_valid(&self, u: usize, v: usize) -> bool {
        let shared = self.shared_faces(u, v);
        if shared.is_empty() {
            return false;
        }
        // Link condition: common neighbours are exactly the opposite vertices
        // of the faces on the edge.
        let mut opposite: Vec<usize> = shared
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != u && w != v)
            .collect();
        opposite.sort_unstable();
        opposite.dedup();
        let nv = self.neighbors(v);
        let common: Vec<usize> = self.neighbors(u).into_iter().filter(|w| nv.binary_search(w).is_ok()).collect();
        if common != opposite {
            return false;
        }
        if shared.len() > 1 && self.is_boundary_vertex(u) {
            return false;
        }
        for f in self.faces_of(u) {
            let tri = self.faces[f];
            if tri.contains(&v) {
                continue;
            }
            let p = tri.map(|i| self.pos[i]);
            let q = tri.map(|i| self.pos[if i == u { v } else { i }]);
            let n_old = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let n_new = cross(sub(q[1], q[0]), sub(q[2], q[0]));
            let (a, b) = (norm(n_old), norm(n_new));
            if b <= 1e-12 * a.max(f64::MIN_POSITIVE) || dot(n_old, n_new) <= 0.1 * a * b {
                return false;
            }
        }
        true
    }

    fn collapse(&mut self, u: usize, v: usize) {
        let faces: Vec<usize> = self.faces_of(u).collect();
        for f in faces {
            if self.faces[f].contains(&v) {
                self.face_alive[f] = false;
            } else {
                for i in self.faces[f].iter_mut() {
                    if *i == u {
                        *i = v;
                    }
                }
                self.incident[v].push(f);
            }
        }
        self.alive[u] = false;
        let qu = self.quadric[u];
        self.quadric[v].add(&qu);
        let nbrs = self.neighbors(v);
        self.version[v] += 1;
        for &w in &nbrs {
            self.version[w] += 1;
        }
        self.push_edges_of(v);
        for w in nbrs {
            self.push_edges_of(w);
        }
    }
}

pub fn decimate(positions: &[[f64; 3]], faces: &[[usize; 3]], target: usize) -> Result<Decimation> {
    let n = positions.len();
    if target < MIN_VERTICES {
        return Err(Error::Decimation(format!(
            "target of {target} vertices is below the minimum of {MIN_VERTICES}"
        )));
    }
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
        return Err(Error::Decimation(format!("face {f:?} out of range")));
    }
    let mut st = State {
        pos: positions,
        faces: faces.to_vec(),
        face_alive: faces.iter().map(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]).collect(),
        incident: vec![Vec::new(); n],
        alive: vec![true; n],
        quadric: vec![Quadric::default(); n],
        version: vec![0; n],
        heap: BinaryHeap::new(),
    };
    for (fi, f) in faces.iter().enumerate() {
        if !st.face_alive[fi] {
            continue;
        }
        for &i in f {
            st.incident[i].push(fi);
        }
        let p = f.map(|i| positions[i]);
        let nrm = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let area2 = norm(nrm);
        if area2 <= 0.0 {
            continue;
        }
        let unit = nrm.map(|c| c / area2);
        let q = Quadric::plane(unit, -dot(unit, p[0]), 0.5 * area2);
        for &i in f {
            st.quadric[i].add(&q);
        }
    }
    for fi in 0..faces.len() {
        if !st.face_alive[fi] {
            continue;
        }
        let f = st.faces[fi];
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if st.shared_faces(a, b).len() != 1 {
                continue;
            }
            let p = f.map(|i| positions[i]);
            let fnrm = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let edge = sub(positions[b], positions[a]);
            let side = cross(edge, fnrm);
            let len = norm(side);
            if len <= 0.0 {
                continue;
            }
            let unit = side.map(|c| c / len);
            let q = Quadric::plane(unit, -dot(unit, positions[a]), BOUNDARY_WEIGHT * dot(edge, edge));
            st.quadric[a].add(&q);
            st.quadric[b].add(&q);
        }
    }
    for v in 0..n {
        st.push_edges_of(v);
    }
    let mut count = n;
    while count > target {
        let Some(c) = st.heap.pop() else {
            return Err(Error::Decimation(format!(
                "no valid collapse left at {count} vertices (target {target})"
            )));
        };
        let (u, v) = (c.from, c.to);
        if !st.alive[u] || !st.alive[v] || st.version[u] != c.version_from || st.version[v] != c.version_to {
            continue;
        }
        if !st.collapse_is_valid(u, v) {
            continue;
        }
        st.collapse(u, v);
        count -= 1;
    }
    let kept: Vec<usize> = (0..n).filter(|&v| st.alive[v]).collect();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let faces = (0..st.faces.len())
        .filter(|&f| st.face_alive[f])
        .map(|f| st.faces[f].map(|i| remap[i]))
        .collect();
    Ok(Decimation { kept, faces })
}
