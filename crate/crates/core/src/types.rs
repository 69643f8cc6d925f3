//! Core data types for point clouds, boxes, and label masks.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One lidar return. Coordinates are in the sensor frame as recorded; the
/// timestamp is the capture time of the individual return in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Normalized reflectance in [0, 1].
    pub intensity: f64,
    pub timestamp: f64,
}

impl Point {
    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.z].iter().all(|v| v.is_finite()) {
            return Err(Error::validation("point", "non-finite coordinates"));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::validation(
                "point.intensity",
                format!("{} outside [0, 1]", self.intensity),
            ));
        }
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::validation(
                "point.timestamp",
                format!("{} is negative or non-finite", self.timestamp),
            ));
        }
        Ok(())
    }
}

/// One lidar sweep. `frame_index` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub frame_index: u32,
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_index == 0 {
            return Err(Error::validation("cloud.frame_index", "must be >= 1"));
        }
        for p in &self.points {
            p.validate()?;
        }
        Ok(())
    }
}

/// Timestamp record for one camera image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub camera_id: u32,
    pub frame_index: u32,
    pub timestamp: f64,
}

/// Oriented box in the world frame.
///
/// `theta` is the yaw of the length axis in (-pi, pi]; fitted boxes report
/// it in [0, pi) since a rectangle is symmetric under half turns.
/// `w`, `l` are the footprint extents (width across, length along the yaw
/// axis) and `h` the vertical extent. `v` and `a` are planar velocity and
/// acceleration in world x/y.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub frame_index: u32,
    pub id: u64,
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub h: f64,
    pub l: f64,
    pub theta: f64,
    pub v: [f64; 2],
    pub a: [f64; 2],
}

impl Box3D {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.x, self.y, self.z, self.w, self.h, self.l, self.theta, self.v[0], self.v[1],
            self.a[0], self.a[1],
        ];
        if !scalars.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("box", "non-finite field"));
        }
        if self.w <= 0.0 || self.h <= 0.0 || self.l <= 0.0 {
            return Err(Error::validation(
                "box",
                format!("non-positive extent w={} h={} l={}", self.w, self.h, self.l),
            ));
        }
        if self.theta <= -std::f64::consts::PI || self.theta > std::f64::consts::PI {
            return Err(Error::validation(
                "box.theta",
                format!("{} outside (-pi, pi]", self.theta),
            ));
        }
        if self.class.is_empty() {
            return Err(Error::validation("box.class", "empty class label"));
        }
        Ok(())
    }
}

/// Which label channel a mask image encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Road,
    Instance,
    ObstacleCandidate,
}

impl MaskKind {
    pub const ALL: [MaskKind; 3] = [MaskKind::Road, MaskKind::Instance, MaskKind::ObstacleCandidate];

    /// Directory name under `masks/`.
    pub fn dir_name(&self) -> &'static str {
        match self {
            MaskKind::Road => "road",
            MaskKind::Instance => "instance",
            MaskKind::ObstacleCandidate => "obstacle_candidate",
        }
    }
}

/// Per-pixel label image. Road and obstacle-candidate masks are binary
/// (0 or 1); instance masks store instance ids with 0 for background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub kind: MaskKind,
    pub camera_id: u32,
    pub frame_index: u32,
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` samples.
    pub data: Vec<u16>,
}

impl LabelMask {
    pub fn new_filled(
        kind: MaskKind,
        camera_id: u32,
        frame_index: u32,
        width: u32,
        height: u32,
        value: u16,
    ) -> Self {
        LabelMask {
            kind,
            camera_id,
            frame_index,
            width,
            height,
            data: vec![value; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u16 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u16) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.width as usize * self.height as usize;
        if self.data.len() != expect {
            return Err(Error::validation(
                "mask.data",
                format!("{} samples for {}x{}", self.data.len(), self.width, self.height),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("mask", "zero-sized image"));
        }
        if matches!(self.kind, MaskKind::Road | MaskKind::ObstacleCandidate)
            && self.data.iter().any(|&v| v > 1)
        {
            return Err(Error::validation(
                "mask.data",
                "binary mask contains values above 1",
            ));
        }
        Ok(())
    }
}
