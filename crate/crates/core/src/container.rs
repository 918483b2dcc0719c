//! `LMS1` motion-sequence container: a 20-byte little-endian header
//! (magic, version, frame count, point count, fps) followed by frame-major
//! `f32` coordinates.

use std::path::Path;

use ndarray::Array3;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LMS1";
pub const VERSION: u32 = 1;
const HEADER: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionContainer {
    pub fps: f32,
    pub frame_count: usize,
    pub point_count: usize,
    /// `frame_count * point_count * 3` values.
    pub data: Vec<f32>,
}

impl MotionContainer {
    pub fn from_frames(frames: &Array3<f64>, fps: f64) -> Result<Self> {
        let (k, p, c) = frames.dim();
        if c != 3 {
            return Err(Error::Shape(format!("expected K x P x 3 frames, got {:?}", frames.dim())));
        }
        Ok(MotionContainer {
            fps: fps as f32,
            frame_count: k,
            point_count: p,
            data: frames.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn frames(&self) -> Array3<f64> {
        Array3::from_shape_fn((self.frame_count, self.point_count, 3), |(k, p, c)| {
            self.data[(k * self.point_count + p) * 3 + c] as f64
        })
    }

    pub fn frame(&self, k: usize) -> Vec<[f64; 3]> {
        let base = k * self.point_count * 3;
        (0..self.point_count)
            .map(|p| {
                let i = base + 3 * p;
                [self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64]
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frame_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.point_count as u32).to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::parse("container", "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::parse("container", "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::parse("container", format!("unsupported version {version}")));
        }
        let frame_count = u32_at(8) as usize;
        let point_count = u32_at(12) as usize;
        let fps = f32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
        let expected = (frame_count as u64) * (point_count as u64) * 12;
        if (bytes.len() - HEADER) as u64 != expected {
            return Err(Error::parse(
                "container",
                format!(
                    "payload is {} bytes, header implies {expected}",
                    bytes.len() - HEADER
                ),
            ));
        }
        let data = bytes[HEADER..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(MotionContainer {
            fps,
            frame_count,
            point_count,
            data,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::train::checkpoint::write_atomic(path.as_ref(), &self.to_bytes())
    }
}
