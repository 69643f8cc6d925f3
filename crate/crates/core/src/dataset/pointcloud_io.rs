//! Binary lidar frame format.
//!
//! A frame is a flat sequence of 24-byte little-endian records:
//! f32 x, f32 y, f32 z, f32 intensity, f64 timestamp. No header.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Point, PointCloud};

use super::create_writer;

pub const RECORD_SIZE: usize = 24;

pub fn load_point_cloud(path: &Path, frame_index: u32) -> Result<PointCloud> {
    let bytes = super::read_file(path)?;
    if bytes.len() % RECORD_SIZE != 0 {
        return Err(Error::parse(
            path,
            None,
            format!(
                "file size {} is not a multiple of the {}-byte record",
                bytes.len(),
                RECORD_SIZE
            ),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_SIZE);
    for (i, rec) in bytes.chunks_exact(RECORD_SIZE).enumerate() {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
        let p = Point {
            x: f(0),
            y: f(4),
            z: f(8),
            intensity: f(12),
            timestamp: f64::from_le_bytes(rec[16..24].try_into().unwrap()),
        };
        p.validate().map_err(|e| {
            Error::parse(path, None, format!("record {i}: {e}"))
        })?;
        points.push(p);
    }
    let cloud = PointCloud {
        frame_index,
        points,
    };
    cloud.validate()?;
    Ok(cloud)
}

/// Writes the cloud, quantizing coordinates and intensity to f32.
pub fn save_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = create_writer(path)?;
    let mut buf = Vec::with_capacity(cloud.points.len() * RECORD_SIZE);
    for p in &cloud.points {
        buf.extend_from_slice(&(p.x as f32).to_le_bytes());
        buf.extend_from_slice(&(p.y as f32).to_le_bytes());
        buf.extend_from_slice(&(p.z as f32).to_le_bytes());
        buf.extend_from_slice(&(p.intensity as f32).to_le_bytes());
        buf.extend_from_slice(&p.timestamp.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `lidar/%06d.bin` for a 1-based frame index.
pub fn frame_file_name(frame_index: u32) -> String {
    format!("{frame_index:06}.bin")
}

pub fn load_frame_dir(dir: &Path, n_frames: u32) -> Result<Vec<PointCloud>> {
    (1..=n_frames)
        .map(|i| load_point_cloud(&dir.join(frame_file_name(i)), i))
        .collect()
}

pub fn save_frame_dir(dir: &Path, clouds: &[PointCloud]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in clouds {
        save_point_cloud(&dir.join(frame_file_name(c.frame_index)), c)?;
    }
    Ok(())
}
