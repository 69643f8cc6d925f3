//! Ego pose table: `poses.csv`.
//!
//! Header `timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz`, one row
//! per sample, values printed with shortest-roundtrip formatting so a
//! load/save cycle is byte identical and rotations stay orthonormal to
//! within validation tolerance.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::transform::{validate_poses, Pose, RigidTransform};

use super::{create_writer, open_reader};

pub const HEADER: &str = "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz";

pub fn load_poses(path: &Path) -> Result<Vec<Pose>> {
    let reader = open_reader(path)?;
    let mut poses = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line.trim_end() != HEADER {
                return Err(Error::parse(path, Some(1), format!("bad header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::parse(
                path,
                Some(lineno),
                format!("expected 13 fields, got {}", fields.len()),
            ));
        }
        let mut vals = [0f64; 13];
        for (j, f) in fields.iter().enumerate() {
            vals[j] = f.parse().map_err(|e| {
                Error::parse(path, Some(lineno), format!("field {j}: {e}"))
            })?;
        }
        let rotation = Matrix3::new(
            vals[1], vals[2], vals[3], //
            vals[4], vals[5], vals[6], //
            vals[7], vals[8], vals[9],
        );
        let translation = Vector3::new(vals[10], vals[11], vals[12]);
        let transform = RigidTransform::new(rotation, translation)
            .map_err(|e| Error::parse(path, Some(lineno), e.to_string()))?;
        poses.push(Pose {
            timestamp: vals[0],
            transform,
        });
    }
    validate_poses(&poses)?;
    Ok(poses)
}

pub fn save_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    validate_poses(poses)?;
    let mut w = create_writer(path)?;
    let mut out = String::with_capacity(poses.len() * 128);
    out.push_str(HEADER);
    out.push('\n');
    for p in poses {
        let r = &p.transform.rotation;
        let t = &p.transform.translation;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.timestamp,
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ));
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
