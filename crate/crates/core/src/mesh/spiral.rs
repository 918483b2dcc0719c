//! Spiral neighbourhood orderings for spiral convolutions.
//!
//! A spiral starts at its centre vertex and then lists the rings of graph
//! distance 1, 2, ... around it. Each ring is walked counter-clockwise (the
//! orientation induced by face winding) and starts at its smallest vertex
//! index. The spiral is then sampled every `dilation` entries and padded with
//! [`SPIRAL_PAD`] when the mesh runs out of vertices.
//!
//! Ring order is purely combinatorial: ring `k` is produced by visiting
//! ring `k - 1` in order and, for each of its vertices, sweeping its fan
//! counter-clockwise starting from a vertex of ring `k - 2`.

use serde::{Deserialize, Serialize};

use super::Adjacency;
use crate::{Error, Result};

pub const SPIRAL_PAD: i32 = -1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpiralIndexTable {
    pub spiral_length: usize,
    pub dilation: usize,
    /// Vertex-major `vertex_count x spiral_length` table.
    pub indices: Vec<i32>,
}

impl SpiralIndexTable {
    pub fn vertex_count(&self) -> usize {
        self.indices.len() / self.spiral_length.max(1)
    }

    pub fn spiral(&self, v: usize) -> &[i32] {
        &self.indices[v * self.spiral_length..(v + 1) * self.spiral_length]
    }
}

pub fn compute_spirals(
    vertex_count: usize,
    faces: &[[usize; 3]],
    spiral_length: usize,
    dilation: usize,
) -> Result<SpiralIndexTable> {
    if spiral_length == 0 {
        return Err(Error::Config("spiral_length must be at least 1".into()));
    }
    if dilation == 0 {
        return Err(Error::Config("dilation must be at least 1".into()));
    }
    if vertex_count > i32::MAX as usize {
        return Err(Error::Config("too many vertices for spiral indices".into()));
    }
    let adj = Adjacency::new(vertex_count, faces);
    let needed = (spiral_length - 1) * dilation + 1;
    let mut walker = RingWalker::new(vertex_count);
    let mut indices = Vec::with_capacity(vertex_count * spiral_length);
    for v in 0..vertex_count {
        let seq = walker.sequence(&adj, v, needed);
        for s in 0..spiral_length {
            let pos = s * dilation;
            indices.push(seq.get(pos).map_or(SPIRAL_PAD, |&u| u as i32));
        }
    }
    Ok(SpiralIndexTable {
        spiral_length,
        dilation,
        indices,
    })
}

/// Scratch state reused across centre vertices.
struct RingWalker {
    dist: Vec<usize>,
    stamp: Vec<usize>,
    emitted: Vec<usize>,
    generation: usize,
}

impl RingWalker {
    fn new(n: usize) -> Self {
        RingWalker {
            dist: vec![0; n],
            stamp: vec![0; n],
            emitted: vec![0; n],
            generation: 0,
        }
    }

    fn dist(&self, u: usize) -> Option<usize> {
        (self.stamp[u] == self.generation).then_some(self.dist[u])
    }

    fn sequence(&mut self, adj: &Adjacency, center: usize, needed: usize) -> Vec<usize> {
        self.generation += 1;
        let g = self.generation;
        self.stamp[center] = g;
        self.dist[center] = 0;
        let mut seq = vec![center];
        let mut prev_ring = vec![center];
        let mut k = 1;
        while seq.len() < needed {
            let mut ring = Vec::new();
            if k == 1 {
                for &u in adj.fan(center) {
                    if self.stamp[u] != g {
                        self.stamp[u] = g;
                        self.dist[u] = 1;
                        ring.push(u);
                    }
                }
            } else {
                for &p in &prev_ring {
                    for &u in adj.fan(p) {
                        if self.stamp[u] != g {
                            self.stamp[u] = g;
                            self.dist[u] = k;
                        }
                    }
                }
                for &p in &prev_ring {
                    let fan = adj.fan(p);
                    let n = fan.len();
                    let start = fan
                        .iter()
                        .position(|&u| self.dist(u) == Some(k - 2))
                        .unwrap_or(0);
                    for i in 1..=n {
                        let u = fan[(start + i) % n];
                        if self.dist(u) == Some(k) && self.emitted[u] != g {
                            self.emitted[u] = g;
                            ring.push(u);
                        }
                    }
                }
            }
            if ring.is_empty() {
                break;
            }
            let min_pos = ring
                .iter()
                .enumerate()
                .min_by_key(|&(_, &u)| u)
                .map(|(i, _)| i)
                .unwrap();
            ring.rotate_left(min_pos);
            seq.extend_from_slice(&ring);
            prev_ring = ring;
            k += 1;
        }
        seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{grid, icosphere};

    #[test]
    fn length_one_is_center_only() {
        let m = icosphere(1, 1.0);
        let t = compute_spirals(m.vertex_count(), &m.faces, 1, 1).unwrap();
        for v in 0..m.vertex_count() {
            assert_eq!(t.spiral(v), &[v as i32]);
        }
    }

    #[test]
    fn grid_interior_one_ring() {
        let g = grid(10, 10, 1.0);
        let t = compute_spirals(100, &g.faces, 7, 1).unwrap();
        // (5,5)=55: ring starts at min index (4,4)=44, then ccw
        assert_eq!(t.spiral(55), &[55, 44, 45, 56, 66, 65, 54]);
    }

    #[test]
    fn boundary_vertex_with_three_neighbours_is_padded() {
        // v0 with neighbours 1, 2, 3 and nothing beyond
        let faces = vec![[0, 1, 2], [0, 2, 3]];
        let t = compute_spirals(4, &faces, 7, 1).unwrap();
        assert_eq!(t.spiral(0), &[0, 1, 2, 3, -1, -1, -1]);
    }

    #[test]
    fn isolated_vertex_gets_sentinels() {
        let t = compute_spirals(4, &[[0, 1, 2]], 4, 1).unwrap();
        assert_eq!(t.spiral(3), &[3, -1, -1, -1]);
    }

    #[test]
    fn dilation_samples_every_other_entry() {
        let g = grid(10, 10, 1.0);
        let full = compute_spirals(100, &g.faces, 13, 1).unwrap();
        let dil = compute_spirals(100, &g.faces, 7, 2).unwrap();
        for v in 0..100 {
            let f = full.spiral(v);
            let expected: Vec<i32> = (0..7).map(|s| f[2 * s]).collect();
            assert_eq!(dil.spiral(v), expected.as_slice());
        }
    }

    #[test]
    fn center_first_valid_and_deterministic() {
        let m = icosphere(2, 1.0);
        let a = compute_spirals(162, &m.faces, 12, 2).unwrap();
        let b = compute_spirals(162, &m.faces, 12, 2).unwrap();
        assert_eq!(a, b);
        for v in 0..162 {
            let s = a.spiral(v);
            assert_eq!(s[0], v as i32);
            assert!(s.iter().all(|&u| u == SPIRAL_PAD || (0..162).contains(&u)));
            let mut uniq: Vec<i32> = s.iter().copied().filter(|&u| u >= 0).collect();
            let n = uniq.len();
            uniq.sort_unstable();
            uniq.dedup();
            assert_eq!(uniq.len(), n);
        }
    }

    #[test]
    fn zero_length_rejected() {
        assert!(compute_spirals(3, &[[0, 1, 2]], 0, 1).is_err());
    }
}
