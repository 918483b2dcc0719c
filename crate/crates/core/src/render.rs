//! Offline flat-shaded rasteriser for inspecting mesh sequences.
//!
//! Orthographic frontal camera looking down `-z`, one directional light,
//! z-buffered triangles. Framing is fixed per sequence so frames line up.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::container::MotionContainer;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// Fraction of the image the framing box fills.
    pub fill: f64,
    pub background: [u8; 3],
    pub base_color: [f64; 3],
    pub light: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 256,
            height: 256,
            fill: 0.9,
            background: [24, 24, 28],
            base_color: [0.85, 0.72, 0.62],
            light: [0.3, 0.4, 1.0],
        }
    }
}

/// Maps model space onto pixels: centre and uniform scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Framing {
    pub center: [f64; 2],
    pub half_extent: f64,
}

impl Framing {
    pub fn fit(vertices: &[[f64; 3]]) -> Framing {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(1e-9);
        Framing {
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            half_extent: half,
        }
    }
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

pub fn render_mesh(vertices: &[[f64; 3]], faces: &[[usize; 3]], framing: &Framing, cfg: &RenderConfig) -> RgbImage {
    let (w, h) = (cfg.width, cfg.height);
    let mut img = RgbImage::from_pixel(w, h, Rgb(cfg.background));
    let mut depth = vec![f64::NEG_INFINITY; (w * h) as usize];
    let scale = cfg.fill * (w.min(h) as f64) / (2.0 * framing.half_extent);
    let project = |v: [f64; 3]| {
        [
            w as f64 / 2.0 + (v[0] - framing.center[0]) * scale,
            h as f64 / 2.0 - (v[1] - framing.center[1]) * scale,
        ]
    };
    let ln = {
        let l = cfg.light;
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    for f in faces {
        let [a, b, c] = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if nn == 0.0 {
            continue;
        }
        let shade = 0.15 + 0.85 * ((n[0] * ln[0] + n[1] * ln[1] + n[2] * ln[2]) / nn).abs();
        let color = Rgb(cfg.base_color.map(|c| (c * shade * 255.0).clamp(0.0, 255.0) as u8));
        let (pa, pb, pc) = (project(a), project(b), project(c));
        let area = edge(pa, pb, pc);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = pa[0].min(pb[0]).min(pc[0]).floor().max(0.0) as u32;
        let x1 = (pa[0].max(pb[0]).max(pc[0]).ceil().min(w as f64 - 1.0)).max(0.0) as u32;
        let y0 = pa[1].min(pb[1]).min(pc[1]).floor().max(0.0) as u32;
        let y1 = (pa[1].max(pb[1]).max(pc[1]).ceil().min(h as f64 - 1.0)).max(0.0) as u32;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let (w0, w1, w2) = (edge(pb, pc, p) / area, edge(pc, pa, p) / area, edge(pa, pb, p) / area);
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * a[2] + w1 * b[2] + w2 * c[2];
                let i = (y * w + x) as usize;
                if z > depth[i] {
                    depth[i] = z;
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    img
}

/// Writes `frame_00000.png`, ... for every frame of `seq`; returns the paths.
pub fn render_frames(seq: &MotionContainer, faces: &[[usize; 3]], out_dir: &Path, cfg: &RenderConfig) -> Result<Vec<PathBuf>> {
    if let Some(&bad) = faces.iter().flatten().find(|&&i| i >= seq.point_count) {
        return Err(Error::Shape(format!("face index {bad} exceeds {} points", seq.point_count)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let framing = if seq.frame_count > 0 {
        Framing::fit(&seq.frame(0))
    } else {
        Framing {
            center: [0.0; 2],
            half_extent: 1.0,
        }
    };
    let mut paths = Vec::with_capacity(seq.frame_count);
    for k in 0..seq.frame_count {
        let img = render_mesh(&seq.frame(k), faces, &framing, cfg);
        let p = out_dir.join(format!("frame_{k:05}.png"));
        img.save(&p).map_err(|e| Error::io(&p, std::io::Error::other(e)))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    #[test]
    fn sphere_covers_center_not_corners() {
        let m = icosphere(2, 1.0);
        let cfg = RenderConfig {
            width: 64,
            height: 64,
            ..RenderConfig::default()
        };
        let img = render_mesh(&m.vertices, &m.faces, &Framing::fit(&m.vertices), &cfg);
        assert_ne!(img.get_pixel(32, 32).0, cfg.background);
        assert_eq!(img.get_pixel(0, 0).0, cfg.background);
    }

    #[test]
    fn one_png_per_frame() {
        let m = icosphere(1, 1.0);
        let frames = ndarray::Array3::from_shape_fn((3, m.vertex_count(), 3), |(k, i, c)| m.vertices[i][c] + k as f64 * 0.1);
        let seq = MotionContainer::from_frames(&frames, 60.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = RenderConfig {
            width: 32,
            height: 32,
            ..RenderConfig::default()
        };
        let paths = render_frames(&seq, &m.faces, dir.path(), &cfg).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.exists()));
        assert!(render_frames(&seq, &[[0, 1, 999]], dir.path(), &cfg).is_err());
    }
}
