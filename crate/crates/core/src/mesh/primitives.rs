//! Procedural meshes used by the toy dataset and the tests.

use std::collections::HashMap;

use super::Mesh;

/// Subdivided icosahedron projected onto a sphere of `radius`; faces wound
/// counter-clockwise seen from outside.
///
/// Vertex count is `10 * 4^subdivisions + 2` (12, 42, 162, 642, ...).
pub fn icosphere(subdivisions: usize, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in vertices.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in vertices.iter_mut() {
        for c in v.iter_mut() {
            *c *= radius;
        }
    }
    Mesh { vertices, faces }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Flat `nx x ny` vertex grid in the z = 0 plane, vertex `y * nx + x` at
/// `(x, y) * spacing`. Each cell is split along its (x, y)-(x+1, y+1)
/// diagonal; faces are counter-clockwise seen from +z.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    let mut vertices = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            vertices.push([x as f64 * spacing, y as f64 * spacing, 0.0]);
        }
    }
    let mut faces = Vec::new();
    for y in 0..ny.saturating_sub(1) {
        for x in 0..nx.saturating_sub(1) {
            let i = y * nx + x;
            faces.push([i, i + 1, i + nx + 1]);
            faces.push([i, i + nx + 1, i + nx]);
        }
    }
    Mesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outward(mesh: &Mesh) -> bool {
        mesh.faces.iter().all(|&[a, b, c]| {
            let (p, q, r) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let u = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
            let v = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let centroid = [p[0] + q[0] + r[0], p[1] + q[1] + r[1], p[2] + q[2] + r[2]];
            n[0] * centroid[0] + n[1] * centroid[1] + n[2] * centroid[2] > 0.0
        })
    }

    #[test]
    fn icosphere_counts_and_winding() {
        for (s, v, f) in [(0, 12, 20), (1, 42, 80), (2, 162, 320), (3, 642, 1280)] {
            let m = icosphere(s, 3.0);
            assert_eq!(m.vertices.len(), v);
            assert_eq!(m.faces.len(), f);
            assert!(outward(&m));
            for p in &m.vertices {
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                assert!((r - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_counts() {
        let g = grid(10, 10, 1.0);
        assert_eq!(g.vertices.len(), 100);
        assert_eq!(g.faces.len(), 162);
    }
}
