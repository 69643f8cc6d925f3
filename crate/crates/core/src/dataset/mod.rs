//! Dataset layout, loading, and saving.
//!
//! A sequence directory contains:
//!
//! ```text
//! manifest.json        sequence metadata and per-frame timestamps
//! calibration.json     lidar extrinsic and camera calibrations
//! poses.csv            ego-to-world poses at high rate
//! lidar/%06d.bin       one binary sweep per frame, 1-based
//! masks/<kind>/cam%02d/%06d.pgm
//! masks/instances.csv  instance id to class table
//! gt/boxes.csv         ground-truth boxes (synthetic sequences)
//! ```

pub mod boxes_io;
pub mod calibration_io;
pub mod mask_io;
pub mod pointcloud_io;
pub mod poses_io;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::transform::{Pose, RigidTransform};
use crate::types::{CameraFrame, LabelMask, MaskKind, PointCloud};

pub use boxes_io::{load_boxes, save_boxes};
pub use calibration_io::Calibration;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound { path: path.into() },
        _ => Error::io(path, e),
    })
}

pub(crate) fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound { path: path.into() },
            _ => Error::io(path, e),
        })
}

/// Opens for writing, creating parent directories.
pub(crate) fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub n_frames: u32,
    pub n_cameras: u32,
    /// Per-frame reference time: the motion-compensation target and the
    /// pose lookup time for frame k is `frame_timestamps[k - 1]`.
    pub frame_timestamps: Vec<f64>,
    /// Image capture times, outer index = camera position in the
    /// calibration table, inner index = frame - 1.
    pub camera_timestamps: Vec<Vec<f64>>,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::validation("manifest.n_frames", "must be >= 1"));
        }
        if self.frame_timestamps.len() != self.n_frames as usize {
            return Err(Error::validation(
                "manifest.frame_timestamps",
                format!(
                    "{} entries for {} frames",
                    self.frame_timestamps.len(),
                    self.n_frames
                ),
            ));
        }
        if !self
            .frame_timestamps
            .windows(2)
            .all(|w| w[0].is_finite() && w[0] < w[1])
            || self.frame_timestamps.iter().any(|t| !t.is_finite())
        {
            return Err(Error::validation(
                "manifest.frame_timestamps",
                "must be finite and strictly increasing",
            ));
        }
        if self.camera_timestamps.len() != self.n_cameras as usize {
            return Err(Error::validation(
                "manifest.camera_timestamps",
                format!(
                    "{} cameras in manifest, {} expected",
                    self.camera_timestamps.len(),
                    self.n_cameras
                ),
            ));
        }
        for (ci, ts) in self.camera_timestamps.iter().enumerate() {
            if ts.len() != self.n_frames as usize {
                return Err(Error::validation(
                    "manifest.camera_timestamps",
                    format!("camera {ci} has {} entries", ts.len()),
                ));
            }
            if ts.iter().any(|t| !t.is_finite()) {
                return Err(Error::validation(
                    "manifest.camera_timestamps",
                    format!("camera {ci} has non-finite timestamps"),
                ));
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<SequenceManifest> {
    let bytes = read_file(path)?;
    let m: SequenceManifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::parse(path, Some(e.line() as u64), e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn save_manifest(path: &Path, manifest: &SequenceManifest) -> Result<()> {
    manifest.validate()?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Internal(format!("serialize manifest: {e}")))?;
    use std::io::Write;
    let mut w = create_writer(path)?;
    w.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The three label channels of one camera at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMasks {
    pub road: LabelMask,
    pub instance: LabelMask,
    pub obstacle_candidate: LabelMask,
}

/// All masks of a sequence plus the instance class table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskSet {
    /// Keyed by (camera_id, frame_index).
    pub by_cam_frame: BTreeMap<(u32, u32), FrameMasks>,
    pub instance_classes: BTreeMap<u16, String>,
}

impl MaskSet {
    pub fn get(&self, camera_id: u32, frame_index: u32) -> Option<&FrameMasks> {
        self.by_cam_frame.get(&(camera_id, frame_index))
    }
}

/// A fully loaded sequence.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: SequenceManifest,
    pub lidar_extrinsic: RigidTransform,
    pub cameras: Vec<CameraCalibration>,
    pub poses: Vec<Pose>,
    /// Index 0 holds frame 1.
    pub clouds: Vec<PointCloud>,
    pub masks: MaskSet,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Dataset> {
        let manifest = load_manifest(&root.join("manifest.json"))?;
        let calib = calibration_io::load_calibration(&root.join("calibration.json"))?;
        if calib.cameras.len() != manifest.n_cameras as usize {
            return Err(Error::validation(
                "calibration.cameras",
                format!(
                    "{} cameras in calibration, manifest declares {}",
                    calib.cameras.len(),
                    manifest.n_cameras
                ),
            ));
        }
        let poses = poses_io::load_poses(&root.join("poses.csv"))?;
        let clouds = pointcloud_io::load_frame_dir(&root.join("lidar"), manifest.n_frames)?;

        let mut masks = MaskSet {
            by_cam_frame: BTreeMap::new(),
            instance_classes: mask_io::load_instance_classes(&root.join("masks/instances.csv"))?,
        };
        for cam in &calib.cameras {
            for frame in 1..=manifest.n_frames {
                let load_kind = |kind: MaskKind| -> Result<LabelMask> {
                    let rel = mask_io::mask_rel_path(kind, cam.camera_id, frame);
                    let mask = mask_io::load_mask(&root.join(&rel), kind, cam.camera_id, frame)?;
                    if mask.width != cam.width || mask.height != cam.height {
                        return Err(Error::validation(
                            "mask",
                            format!(
                                "{rel} is {}x{}, camera {} expects {}x{}",
                                mask.width, mask.height, cam.camera_id, cam.width, cam.height
                            ),
                        ));
                    }
                    Ok(mask)
                };
                masks.by_cam_frame.insert(
                    (cam.camera_id, frame),
                    FrameMasks {
                        road: load_kind(MaskKind::Road)?,
                        instance: load_kind(MaskKind::Instance)?,
                        obstacle_candidate: load_kind(MaskKind::ObstacleCandidate)?,
                    },
                );
            }
        }

        let ds = Dataset {
            root: root.to_path_buf(),
            manifest,
            lidar_extrinsic: calib.lidar_extrinsic,
            cameras: calib.cameras,
            poses,
            clouds,
            masks,
        };
        ds.cross_validate()?;
        Ok(ds)
    }

    fn cross_validate(&self) -> Result<()> {
        let (t0, t1) = (
            self.poses.first().map(|p| p.timestamp).unwrap_or(0.0),
            self.poses.last().map(|p| p.timestamp).unwrap_or(0.0),
        );
        let in_pose_range = |t: f64| t >= t0 && t <= t1;
        for (i, cloud) in self.clouds.iter().enumerate() {
            if cloud.frame_index != i as u32 + 1 {
                return Err(Error::validation(
                    "dataset.clouds",
                    format!("cloud {i} has frame index {}", cloud.frame_index),
                ));
            }
            if cloud.points.iter().any(|p| !in_pose_range(p.timestamp)) {
                return Err(Error::validation(
                    "dataset.clouds",
                    format!(
                        "frame {} has point timestamps outside the pose range [{t0}, {t1}]",
                        cloud.frame_index
                    ),
                ));
            }
        }
        for &t in &self.manifest.frame_timestamps {
            if !in_pose_range(t) {
                return Err(Error::validation(
                    "manifest.frame_timestamps",
                    format!("{t} outside the pose range [{t0}, {t1}]"),
                ));
            }
        }
        for masks in self.masks.by_cam_frame.values() {
            for v in &masks.instance.data {
                if *v != 0 && !self.masks.instance_classes.contains_key(v) {
                    return Err(Error::validation(
                        "masks.instance",
                        format!("instance id {v} not in instances.csv"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Writes everything except `gt/` and outputs.
    pub fn save(&self, root: &Path) -> Result<()> {
        save_manifest(&root.join("manifest.json"), &self.manifest)?;
        calibration_io::save_calibration(
            &root.join("calibration.json"),
            &Calibration {
                lidar_extrinsic: self.lidar_extrinsic.clone(),
                cameras: self.cameras.clone(),
            },
        )?;
        poses_io::save_poses(&root.join("poses.csv"), &self.poses)?;
        pointcloud_io::save_frame_dir(&root.join("lidar"), &self.clouds)?;
        for (&(cam, frame), masks) in &self.masks.by_cam_frame {
            for mask in [&masks.road, &masks.instance, &masks.obstacle_candidate] {
                let rel = mask_io::mask_rel_path(mask.kind, cam, frame);
                mask_io::save_mask(&root.join(rel), mask)?;
            }
        }
        mask_io::save_instance_classes(
            &root.join("masks/instances.csv"),
            &self.masks.instance_classes,
        )?;
        Ok(())
    }

    /// Reference time of a 1-based frame.
    pub fn frame_time(&self, frame_index: u32) -> f64 {
        self.manifest.frame_timestamps[frame_index as usize - 1]
    }

    pub fn camera_frames(&self, frame_index: u32) -> Vec<CameraFrame> {
        self.cameras
            .iter()
            .enumerate()
            .map(|(ci, cam)| CameraFrame {
                camera_id: cam.camera_id,
                frame_index,
                timestamp: self.manifest.camera_timestamps[ci][frame_index as usize - 1],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::forward_camera_rotation;
    use crate::types::Point;
    use nalgebra::{Matrix3, Vector3};
    use tempfile::tempdir;

    pub(crate) fn tiny_dataset() -> Dataset {
        let n_frames = 2u32;
        let poses: Vec<Pose> = (0..=6)
            .map(|i| Pose {
                timestamp: i as f64 * 0.05 - 0.05,
                transform: RigidTransform {
                    rotation: Matrix3::identity(),
                    translation: Vector3::new(2.0 * i as f64, 0.0, 0.0),
                },
            })
            .collect();
        let cam = CameraCalibration {
            camera_id: 0,
            fx: 100.0,
            fy: 100.0,
            cx: 8.0,
            cy: 6.0,
            width: 16,
            height: 12,
            extrinsic: RigidTransform {
                rotation: forward_camera_rotation(),
                translation: Vector3::zeros(),
            },
        };
        let clouds: Vec<PointCloud> = (1..=n_frames)
            .map(|f| PointCloud {
                frame_index: f,
                points: vec![Point {
                    x: 5.0,
                    y: 0.25,
                    z: -1.5,
                    intensity: 0.75,
                    timestamp: 0.05 * f as f64,
                }],
            })
            .collect();
        let mut by_cam_frame = BTreeMap::new();
        for f in 1..=n_frames {
            let mut instance = LabelMask::new_filled(MaskKind::Instance, 0, f, 16, 12, 0);
            instance.set(3, 4, 1);
            by_cam_frame.insert(
                (0u32, f),
                FrameMasks {
                    road: LabelMask::new_filled(MaskKind::Road, 0, f, 16, 12, 1),
                    instance,
                    obstacle_candidate: LabelMask::new_filled(
                        MaskKind::ObstacleCandidate,
                        0,
                        f,
                        16,
                        12,
                        0,
                    ),
                },
            );
        }
        let mut instance_classes = BTreeMap::new();
        instance_classes.insert(1u16, "cone".to_string());
        Dataset {
            root: PathBuf::new(),
            manifest: SequenceManifest {
                sequence_id: "tiny".into(),
                n_frames,
                n_cameras: 1,
                frame_timestamps: vec![0.1, 0.2],
                camera_timestamps: vec![vec![0.05, 0.15]],
            },
            lidar_extrinsic: RigidTransform {
                rotation: Matrix3::identity(),
                translation: Vector3::new(0.0, 0.0, 1.8),
            },
            cameras: vec![cam],
            poses,
            clouds,
            masks: MaskSet {
                by_cam_frame,
                instance_classes,
            },
        }
    }

    #[test]
    fn save_load_roundtrip_preserves_everything() {
        let dir = tempdir().unwrap();
        let ds = tiny_dataset();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.cameras, ds.cameras);
        assert_eq!(back.lidar_extrinsic, ds.lidar_extrinsic);
        assert_eq!(back.clouds, ds.clouds);
        assert_eq!(back.masks, ds.masks);
        assert_eq!(back.poses.len(), ds.poses.len());
        for (a, b) in back.poses.iter().zip(&ds.poses) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.transform, b.transform);
        }
    }

    #[test]
    fn missing_lidar_frame_is_not_found() {
        let dir = tempdir().unwrap();
        let ds = tiny_dataset();
        ds.save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("lidar/000002.bin")).unwrap();
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(Error::NotFound { .. })
        ));
    }

    #[test]
    fn unknown_instance_id_in_mask_is_rejected() {
        let dir = tempdir().unwrap();
        let mut ds = tiny_dataset();
        ds.masks
            .by_cam_frame
            .get_mut(&(0, 1))
            .unwrap()
            .instance
            .set(0, 0, 42);
        ds.save(dir.path()).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("instance id 42"), "{err}");
    }

    #[test]
    fn point_timestamp_outside_pose_range_is_rejected() {
        let dir = tempdir().unwrap();
        let mut ds = tiny_dataset();
        ds.clouds[0].points[0].timestamp = 99.0;
        ds.save(dir.path()).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("pose range"), "{err}");
    }

    #[test]
    fn mask_size_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let ds = tiny_dataset();
        ds.save(dir.path()).unwrap();
        let small = LabelMask::new_filled(MaskKind::Road, 0, 1, 8, 6, 0);
        mask_io::save_mask(&dir.path().join("masks/road/cam00/000001.pgm"), &small).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("expects"), "{err}");
    }
}
