//! Sensor calibration: `calibration.json`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::transform::RigidTransform;

use super::{create_writer, read_file};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// Lidar-to-ego transform.
    pub lidar_extrinsic: RigidTransform,
    /// Sorted by camera id; ids must be unique.
    pub cameras: Vec<CameraCalibration>,
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        self.lidar_extrinsic.validate()?;
        let mut seen = BTreeSet::new();
        for (i, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            if !seen.insert(cam.camera_id) {
                return Err(Error::validation(
                    "calibration.cameras",
                    format!("duplicate camera id {}", cam.camera_id),
                ));
            }
            if i > 0 && self.cameras[i - 1].camera_id > cam.camera_id {
                return Err(Error::validation(
                    "calibration.cameras",
                    "cameras not sorted by id",
                ));
            }
        }
        Ok(())
    }
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    let bytes = read_file(path)?;
    let calib: Calibration = serde_json::from_slice(&bytes)
        .map_err(|e| Error::parse(path, Some(e.line() as u64), e.to_string()))?;
    calib.validate()?;
    Ok(calib)
}

pub fn save_calibration(path: &Path, calib: &Calibration) -> Result<()> {
    calib.validate()?;
    let mut w = create_writer(path)?;
    let json = serde_json::to_string_pretty(calib)
        .map_err(|e| Error::Internal(format!("serialize calibration: {e}")))?;
    w.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
