//! Pinhole camera model: calibration, projection, and backprojection.
//!
//! Camera frames are z-forward, x-right, y-down. The extrinsic maps ego
//! coordinates to camera coordinates.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraCalibration {
    pub camera_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Ego-to-camera transform.
    pub extrinsic: RigidTransform,
}

/// A point projected into the image. `u` grows rightward, `v` downward;
/// `depth` is the camera-frame z of the point and is always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point_index: usize,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    /// Pixel containing the projection. In bounds by construction.
    pub fn pixel(&self) -> (u32, u32) {
        (self.u as u32, self.v as u32)
    }
}

impl CameraCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::validation(
                "calibration",
                format!("bad intrinsics fx={} fy={} cx={} cy={}", self.fx, self.fy, self.cx, self.cy),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("calibration", "zero image size"));
        }
        self.extrinsic.validate()
    }

    /// Projects an ego-frame point. Returns `None` when the point is behind
    /// the image plane (camera z <= 0) or lands outside the image bounds.
    pub fn project_point(&self, p_ego: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.extrinsic.apply(p_ego);
        if c.z <= 0.0 {
            return None;
        }
        let u = self.fx * c.x / c.z + self.cx;
        let v = self.fy * c.y / c.z + self.cy;
        if u < 0.0 || u >= self.width as f64 || v < 0.0 || v >= self.height as f64 {
            return None;
        }
        Some((u, v, c.z))
    }

    /// Projects ego-frame points, keeping only those in front of the camera
    /// and inside the image. Output order follows input order.
    pub fn project_points(&self, pts_ego: &[Vector3<f64>]) -> Vec<Projection> {
        pts_ego
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                self.project_point(p).map(|(u, v, depth)| Projection {
                    point_index: i,
                    u,
                    v,
                    depth,
                })
            })
            .collect()
    }

    /// Inverse of `project_point` for a known depth (camera-frame z, must be
    /// positive). Returns the ego-frame point.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        debug_assert!(depth > 0.0);
        let c = Vector3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        self.extrinsic.inverse().apply(&c)
    }
}

/// Extrinsic rotation for a camera looking along ego +x: maps x-forward,
/// y-left, z-up coordinates into z-forward, x-right, y-down.
pub fn forward_camera_rotation() -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    )
}
