//! Rigid transforms, pose interpolation, and per-point motion compensation.
//!
//! Conventions: ego and world frames are x-forward, y-left, z-up. A pose is
//! the ego-to-world transform at a timestamp. The lidar extrinsic maps
//! sensor coordinates to ego coordinates.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Point, PointCloud};

/// Max deviation of `R^T R` from identity (and of `det R` from 1).
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Proper rigid transform: `p_out = rotation * p_in + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// On-disk shape: row-major 3x3 rotation plus translation triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RigidTransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: RigidTransformRepr) -> Result<Self> {
        let rotation = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        let translation = Vector3::from(r.translation);
        RigidTransform::new(rotation, translation)
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        RigidTransformRepr {
            rotation: [
                [t.rotation[(0, 0)], t.rotation[(0, 1)], t.rotation[(0, 2)]],
                [t.rotation[(1, 0)], t.rotation[(1, 1)], t.rotation[(1, 2)]],
                [t.rotation[(2, 0)], t.rotation[(2, 1)], t.rotation[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality and determinant before accepting the parts.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = RigidTransform {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_rotation_z(angle: f64, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner(),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::validation("transform", "non-finite entries"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::validation(
                "transform.rotation",
                format!("not orthonormal, deviation {dev:.3e}"),
            ));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::validation(
                "transform.rotation",
                format!("determinant {det} is not 1"),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.transpose();
        RigidTransform {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }
}

/// Ego-to-world transform sampled at a timestamp.
#[derive(Debug, Clone)]
pub struct Pose {
    pub timestamp: f64,
    pub transform: RigidTransform,
}

/// Checks the preconditions for interpolation: nonempty, finite, strictly
/// ascending timestamps, valid transforms.
pub fn validate_poses(poses: &[Pose]) -> Result<()> {
    if poses.is_empty() {
        return Err(Error::validation("poses", "empty pose table"));
    }
    for (i, p) in poses.iter().enumerate() {
        if !p.timestamp.is_finite() {
            return Err(Error::validation("poses", format!("non-finite timestamp at row {i}")));
        }
        p.transform.validate()?;
        if i > 0 && poses[i - 1].timestamp >= p.timestamp {
            return Err(Error::validation(
                "poses",
                format!("timestamps not strictly increasing at row {i}"),
            ));
        }
    }
    Ok(())
}

/// Interpolates the ego-to-world pose at time `t`.
///
/// Translation is interpolated linearly and rotation by quaternion slerp
/// between the bracketing samples. A query at a sample timestamp returns
/// that sample exactly. Queries outside the sampled range are an error.
pub fn interpolate_pose(poses: &[Pose], t: f64) -> Result<RigidTransform> {
    let (first, last) = match (poses.first(), poses.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::validation("poses", "empty pose table")),
    };
    if t < first.timestamp || t > last.timestamp {
        return Err(Error::validation(
            "poses",
            format!(
                "query time {t} outside pose range [{}, {}]",
                first.timestamp, last.timestamp
            ),
        ));
    }
    // Index of the first sample with timestamp >= t.
    let hi = poses.partition_point(|p| p.timestamp < t);
    if poses[hi].timestamp == t {
        return Ok(poses[hi].transform.clone());
    }
    let lo = hi - 1;
    let (p0, p1) = (&poses[lo], &poses[hi]);
    let alpha = (t - p0.timestamp) / (p1.timestamp - p0.timestamp);

    let translation =
        p0.transform.translation + (p1.transform.translation - p0.transform.translation) * alpha;

    let q0 = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        p0.transform.rotation,
    ));
    let mut q1 = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        p1.transform.rotation,
    ));
    // Keep the shortest arc; adjacent poses are never near-antipodal.
    if q0.coords.dot(&q1.coords) < 0.0 {
        q1 = UnitQuaternion::new_unchecked(-q1.into_inner());
    }
    let q = q0
        .try_slerp(&q1, alpha, 1e-12)
        .unwrap_or(if alpha < 0.5 { q0 } else { q1 });
    Ok(RigidTransform {
        rotation: q.to_rotation_matrix().into_inner(),
        translation,
    })
}

/// Re-expresses every point of `cloud` (sensor frame, captured at its own
/// timestamp) in the ego frame at `target_time`, undoing ego motion during
/// the sweep.
///
/// Per point: sensor -> ego (extrinsic), ego -> world at the capture time,
/// world -> ego at the target time. Intensities and timestamps are kept.
pub fn motion_compensate(
    cloud: &PointCloud,
    poses: &[Pose],
    lidar_extrinsic: &RigidTransform,
    target_time: f64,
) -> Result<PointCloud> {
    let target_inv = interpolate_pose(poses, target_time)?.inverse();
    let mut points = Vec::with_capacity(cloud.points.len());
    // Consecutive points usually share a capture timestamp (one per azimuth
    // column), so cache the last composed transform.
    let mut cached: Option<(f64, RigidTransform)> = None;
    for p in &cloud.points {
        let full = match &cached {
            Some((t, tf)) if *t == p.timestamp => tf,
            _ => {
                let world_at_capture = interpolate_pose(poses, p.timestamp)?;
                let tf = target_inv.compose(&world_at_capture).compose(lidar_extrinsic);
                cached = Some((p.timestamp, tf));
                &cached.as_ref().unwrap().1
            }
        };
        let q = full.apply(&Vector3::new(p.x, p.y, p.z));
        points.push(Point {
            x: q.x,
            y: q.y,
            z: q.z,
            intensity: p.intensity,
            timestamp: p.timestamp,
        });
    }
    Ok(PointCloud {
        frame_index: cloud.frame_index,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rot_z(angle: f64) -> Matrix3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = RigidTransform::from_rotation_z(std::f64::consts::FRAC_PI_2, Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 2.0, 0.0),
        };
        let p = Vector3::new(1.0, 0.0, 0.0);
        let via_compose = a.compose(&b).apply(&p);
        let via_steps = a.apply(&b.apply(&p));
        assert_relative_eq!(via_compose, via_steps, epsilon = 1e-12);
        // b shifts to (1,2,0); a rotates 90 deg about z to (-2,1,0) then shifts x by 1.
        assert_relative_eq!(via_compose, Vector3::new(-1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn inverse_roundtrips() {
        let t = RigidTransform::from_rotation_z(0.7, Vector3::new(3.0, -1.0, 2.0));
        let p = Vector3::new(5.0, 4.0, -3.0);
        let back = t.inverse().apply(&t.apply(&p));
        assert_relative_eq!(back, p, epsilon = 1e-12);
        let ident = t.compose(&t.inverse());
        assert_relative_eq!(ident.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(ident.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn validate_rejects_scaled_rotation() {
        let t = RigidTransform {
            rotation: Matrix3::identity() * 1.001,
            translation: Vector3::zeros(),
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn validate_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        let t = RigidTransform {
            rotation: m,
            translation: Vector3::zeros(),
        };
        assert!(t.validate().is_err());
    }

    fn straight_line_poses() -> Vec<Pose> {
        // 10 m/s along x, sampled at 10 Hz for 1 s.
        (0..=10)
            .map(|i| {
                let t = i as f64 * 0.1;
                Pose {
                    timestamp: t,
                    transform: RigidTransform {
                        rotation: Matrix3::identity(),
                        translation: Vector3::new(10.0 * t, 0.0, 0.0),
                    },
                }
            })
            .collect()
    }

    #[test]
    fn interpolation_at_sample_is_exact() {
        let poses = straight_line_poses();
        let got = interpolate_pose(&poses, poses[3].timestamp).unwrap();
        assert_eq!(got.translation, poses[3].transform.translation);
        assert_eq!(got.rotation, poses[3].transform.rotation);
    }

    #[test]
    fn interpolation_is_linear_in_translation() {
        let poses = straight_line_poses();
        let got = interpolate_pose(&poses, 0.25).unwrap();
        assert_relative_eq!(got.translation, Vector3::new(2.5, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn interpolation_slerps_rotation() {
        let poses = vec![
            Pose {
                timestamp: 0.0,
                transform: RigidTransform {
                    rotation: rot_z(0.0),
                    translation: Vector3::zeros(),
                },
            },
            Pose {
                timestamp: 1.0,
                transform: RigidTransform {
                    rotation: rot_z(0.8),
                    translation: Vector3::zeros(),
                },
            },
        ];
        let got = interpolate_pose(&poses, 0.5).unwrap();
        assert_relative_eq!(got.rotation, rot_z(0.4), epsilon = 1e-12);
        got.validate().unwrap();
    }

    #[test]
    fn interpolation_outside_range_is_error() {
        let poses = straight_line_poses();
        assert!(interpolate_pose(&poses, -0.01).is_err());
        assert!(interpolate_pose(&poses, 1.01).is_err());
    }

    #[test]
    fn motion_compensation_undoes_ego_advance() {
        let poses = straight_line_poses();
        let cloud = PointCloud {
            frame_index: 1,
            points: vec![Point {
                x: 5.0,
                y: 0.0,
                z: 0.0,
                intensity: 1.0,
                timestamp: 0.4,
            }],
        };
        let out = motion_compensate(&cloud, &poses, &RigidTransform::identity(), 0.5).unwrap();
        // Ego advances 1 m between capture (t=0.4) and target (t=0.5), so the
        // static point sits 1 m further back than the raw coordinate.
        assert_relative_eq!(out.points[0].x, 4.0, epsilon = 1e-9);
        assert_relative_eq!(out.points[0].y, 0.0, epsilon = 1e-9);
        assert_eq!(out.points[0].timestamp, 0.4);
    }

    #[test]
    fn motion_compensation_applies_lidar_extrinsic() {
        let poses = straight_line_poses();
        let extrinsic = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 1.8),
        };
        let cloud = PointCloud {
            frame_index: 1,
            points: vec![Point {
                x: 5.0,
                y: 0.0,
                z: 0.0,
                intensity: 1.0,
                timestamp: 0.5,
            }],
        };
        let out = motion_compensate(&cloud, &poses, &extrinsic, 0.5).unwrap();
        assert_relative_eq!(out.points[0].z, 1.8, epsilon = 1e-12);
        assert_relative_eq!(out.points[0].x, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn serde_roundtrip_preserves_transform() {
        let t = RigidTransform::from_rotation_z(1.1, Vector3::new(0.5, -2.0, 9.0));
        let json = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn serde_rejects_invalid_rotation() {
        let json = r#"{"rotation":[[2,0,0],[0,1,0],[0,0,1]],"translation":[0,0,0]}"#;
        let r: std::result::Result<RigidTransform, _> = serde_json::from_str(json);
        assert!(r.is_err());
    }
}
