//! Deterministic synthetic scene generator.
//!
//! Renders a full dataset (LiDAR sweeps, poses, perfect masks, GT boxes)
//! for a straight road along world +x. The ground is a quadratic surface
//! (flat by default) with optional additive quadratic bump patches;
//! obstacles are yawed cuboids with constant planar velocity. LiDAR points
//! come from closed-form ray casting with per-return drop-out
//! (probability `1 - reflectivity`) and truncated Gaussian range noise, so
//! every return lies within `6 * noise_sigma` of an exact intersection.
//! All randomness is counter-based and keyed by (seed, frame, beam, step):
//! output trees are byte-identical for equal specs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{forward_camera_rotation, CameraCalibration};
use crate::dataset::boxes_io::save_boxes;
use crate::dataset::calibration_io::{save_calibration, Calibration};
use crate::dataset::mask_io::{mask_rel_path, save_instance_classes, save_mask};
use crate::dataset::pointcloud_io::{frame_file_name, save_point_cloud};
use crate::dataset::poses_io::save_poses;
use crate::dataset::{save_manifest, FrameMasks, SequenceManifest};
use crate::error::{Error, Result};
use crate::kinematics;
use crate::rng::StreamRng;
use crate::transform::{Pose, RigidTransform};
use crate::types::{Box3D, LabelMask, MaskKind, Point, PointCloud};

/// Ego pose sampling rate in the generated `poses.csv`.
pub const POSE_RATE_HZ: f64 = 100.0;
/// Pose coverage beyond `[0, duration]` so every point and camera
/// timestamp interpolates strictly inside the pose span.
pub const POSE_MARGIN_S: f64 = 0.2;

const RAY_MIN_S: f64 = 1e-6;
const RAY_STREAM_TAG: u64 = 0x7261_79;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSpec {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    /// Optical center in the ego frame.
    pub position: [f64; 3],
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            width: 960,
            height: 540,
            fx: 540.0,
            fy: 540.0,
            position: [1.5, 0.0, 1.6],
        }
    }
}

impl CameraSpec {
    pub fn to_calibration(&self, camera_id: u32) -> CameraCalibration {
        let rotation = forward_camera_rotation();
        let center = Vector3::from(self.position);
        CameraCalibration {
            camera_id,
            fx: self.fx,
            fy: self.fy,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
            extrinsic: RigidTransform {
                rotation,
                translation: -(rotation * center),
            },
        }
    }
}

/// Additive quadratic cap on the ground: inside `radius` of `center` the
/// surface gains `height * (1 - d^2 / radius^2)`. Negative heights are
/// holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    /// Cuboid center, world frame at t = 0.
    pub position: [f64; 3],
    /// Full side lengths along the yawed local x/y and vertical z.
    pub extent: [f64; 3],
    pub yaw: f64,
    pub reflectivity: f64,
    pub class: String,
    /// Constant planar velocity, world frame.
    #[serde(default)]
    pub velocity: [f64; 2],
}

impl ObstacleSpec {
    fn center_at(&self, t: f64) -> Vector3<f64> {
        Vector3::new(
            self.position[0] + self.velocity[0] * t,
            self.position[1] + self.velocity[1] * t,
            self.position[2],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    pub sequence_id: String,
    /// Seconds of simulated driving.
    pub duration: f64,
    /// Sweeps per second.
    pub lidar_rate: f64,
    pub ego_speed: f64,
    pub ego_start_x: f64,
    pub road_width: f64,
    pub beam_count: usize,
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub noise_sigma: f64,
    /// Sensor origin height above the ego frame.
    pub lidar_height: f64,
    pub camera: CameraSpec,
    /// Base ground surface z = c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2.
    pub surface: [f64; 6],
    pub bumps: Vec<BumpSpec>,
    pub obstacles: Vec<ObstacleSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            sequence_id: "synthetic".to_string(),
            duration: 15.0,
            lidar_rate: 10.0,
            ego_speed: 8.0,
            ego_start_x: 0.0,
            road_width: 12.0,
            beam_count: 64,
            azimuth_steps: 1200,
            max_range: 100.0,
            noise_sigma: 0.02,
            lidar_height: 1.8,
            camera: CameraSpec::default(),
            surface: [0.0; 6],
            bumps: Vec::new(),
            obstacles: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !(self.lidar_rate > 0.0) {
            return Err(Error::validation("scene", "duration and lidar_rate must be positive"));
        }
        if self.n_frames() == 0 {
            return Err(Error::validation("scene.duration", "yields zero frames"));
        }
        if self.sequence_id.is_empty() {
            return Err(Error::validation("scene.sequence_id", "must be nonempty"));
        }
        if !(self.ego_speed >= 0.0) || !self.ego_start_x.is_finite() {
            return Err(Error::validation("scene.ego", "bad speed or start"));
        }
        if !(self.road_width > 0.0) {
            return Err(Error::validation("scene.road_width", "must be positive"));
        }
        if self.beam_count < 2 || self.azimuth_steps < 4 {
            return Err(Error::validation("scene", "needs >= 2 beams and >= 4 azimuth steps"));
        }
        if !(self.max_range > 0.0) || !(self.noise_sigma >= 0.0) || !(self.lidar_height > 0.0) {
            return Err(Error::validation("scene", "bad range, noise, or lidar height"));
        }
        let cam = self.camera.to_calibration(0);
        cam.validate()?;
        if self.surface.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("scene.surface", "non-finite coefficient"));
        }
        for (i, b) in self.bumps.iter().enumerate() {
            if !(b.radius > 0.0) || b.height == 0.0 || !b.height.is_finite() {
                return Err(Error::validation(
                    "scene.bumps",
                    format!("bump {i}: radius must be positive and height nonzero"),
                ));
            }
            for (j, other) in self.bumps.iter().enumerate().take(i) {
                let dx = b.center[0] - other.center[0];
                let dy = b.center[1] - other.center[1];
                if (dx * dx + dy * dy).sqrt() < b.radius + other.radius {
                    return Err(Error::validation(
                        "scene.bumps",
                        format!("bumps {j} and {i} overlap"),
                    ));
                }
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.extent.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::validation(
                    "scene.obstacles",
                    format!("obstacle {i}: extents must be positive"),
                ));
            }
            if !(0.0..=1.0).contains(&o.reflectivity) {
                return Err(Error::validation(
                    "scene.obstacles",
                    format!("obstacle {i}: reflectivity outside [0, 1]"),
                ));
            }
            if o.class.is_empty() || o.class.contains(',') || o.class.contains('\n') {
                return Err(Error::validation(
                    "scene.obstacles",
                    format!("obstacle {i}: bad class label"),
                ));
            }
            if !o.yaw.is_finite() || o.velocity.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "scene.obstacles",
                    format!("obstacle {i}: non-finite yaw or velocity"),
                ));
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> u32 {
        (self.duration * self.lidar_rate).round() as u32
    }

    pub fn sweep_duration(&self) -> f64 {
        1.0 / self.lidar_rate
    }

    /// Sweep start time of a 1-based frame.
    pub fn frame_start(&self, frame_index: u32) -> f64 {
        (frame_index - 1) as f64 / self.lidar_rate
    }

    /// Mid-sweep reference time: motion-compensation target and camera
    /// capture time of the frame.
    pub fn frame_time(&self, frame_index: u32) -> f64 {
        self.frame_start(frame_index) + 0.5 * self.sweep_duration()
    }

    /// Ego pose at time `t`: translation along +x, identity rotation.
    pub fn ego_pose(&self, t: f64) -> RigidTransform {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(self.ego_start_x + self.ego_speed * t, 0.0, 0.0),
        }
    }

    /// True ground height at world (x, y): base quadratic plus bump caps.
    pub fn surface_z(&self, x: f64, y: f64) -> f64 {
        let c = &self.surface;
        let mut z = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
        for b in &self.bumps {
            let d2 = (x - b.center[0]).powi(2) + (y - b.center[1]).powi(2);
            let r2 = b.radius * b.radius;
            if d2 < r2 {
                z += b.height * (1.0 - d2 / r2);
            }
        }
        z
    }

    fn on_road(&self, y: f64) -> bool {
        y.abs() <= self.road_width / 2.0
    }

    /// Beam elevations in radians, downward-heavy: the top 5/8 of the beams
    /// span [-8 deg, +2 deg], the rest [-30 deg, -8 deg).
    fn beam_elevations(&self) -> Vec<f64> {
        let n_upper = (self.beam_count * 5).div_ceil(8).max(2);
        let n_upper = n_upper.min(self.beam_count);
        let n_lower = self.beam_count - n_upper;
        let mut out = Vec::with_capacity(self.beam_count);
        for j in 0..n_lower {
            out.push((-30.0 + 22.0 * j as f64 / n_lower as f64).to_radians());
        }
        for j in 0..n_upper {
            out.push((-8.0 + 10.0 * j as f64 / (n_upper - 1) as f64).to_radians());
        }
        out
    }
}

/// What a LiDAR return reflected off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    /// Base ground surface (outside every bump).
    Ground,
    /// Bump patch by index into `SceneSpec::bumps`.
    Bump(usize),
    /// Cuboid by index into `SceneSpec::obstacles`.
    Obstacle(usize),
}

/// One simulated sweep plus everything the writers and test oracles need.
#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    /// Sensor-frame points with per-point capture times.
    pub cloud: PointCloud,
    /// Surface provenance, aligned with `cloud.points`.
    pub sources: Vec<PointSource>,
    pub frame_time: f64,
    pub camera_time: f64,
    pub masks: FrameMasks,
}

/// Quadratic surface coefficients of a bump cap added to the base, valid
/// inside the bump disk.
fn bump_region_coeffs(base: &[f64; 6], b: &BumpSpec) -> [f64; 6] {
    let (bx, by) = (b.center[0], b.center[1]);
    let k = b.height / (b.radius * b.radius);
    [
        base[0] + b.height - k * (bx * bx + by * by),
        base[1] + 2.0 * k * bx,
        base[2] + 2.0 * k * by,
        base[3] - k,
        base[4],
        base[5] - k,
    ]
}

/// Smallest `s > RAY_MIN_S` with `o + s d` on the quadratic surface, along
/// with the second root if both are valid.
fn ray_vs_quadratic(c: &[f64; 6], o: &Vector3<f64>, d: &Vector3<f64>) -> [Option<f64>; 2] {
    let (ox, oy, oz) = (o.x, o.y, o.z);
    let (dx, dy, dz) = (d.x, d.y, d.z);
    let a2 = c[3] * dx * dx + c[4] * dx * dy + c[5] * dy * dy;
    let a1 = c[1] * dx + c[2] * dy + 2.0 * c[3] * ox * dx + c[4] * (ox * dy + oy * dx)
        + 2.0 * c[5] * oy * dy
        - dz;
    let a0 = c[0] + c[1] * ox + c[2] * oy + c[3] * ox * ox + c[4] * ox * oy + c[5] * oy * oy - oz;
    let mut roots = [None, None];
    if a2.abs() < 1e-14 {
        if a1.abs() > 1e-14 {
            let s = -a0 / a1;
            if s > RAY_MIN_S {
                roots[0] = Some(s);
            }
        }
        return roots;
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return roots;
    }
    let sq = disc.sqrt();
    // Numerically stable pair.
    let q = -0.5 * (a1 + a1.signum() * sq);
    let mut pair = [q / a2, if q.abs() > 1e-300 { a0 / q } else { f64::INFINITY }];
    pair.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut n = 0;
    for s in pair {
        if s.is_finite() && s > RAY_MIN_S {
            roots[n] = Some(s);
            n += 1;
        }
    }
    roots
}

/// Nearest ground-or-bump intersection of a world-frame ray.
fn intersect_surface(spec: &SceneSpec, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, PointSource)> {
    let inside_bump = |x: f64, y: f64, b: &BumpSpec| {
        (x - b.center[0]).powi(2) + (y - b.center[1]).powi(2) < b.radius * b.radius
    };
    let mut best: Option<(f64, PointSource)> = None;
    for s in ray_vs_quadratic(&spec.surface, o, d).into_iter().flatten() {
        let p = o + d * s;
        if spec.bumps.iter().all(|b| !inside_bump(p.x, p.y, b)) {
            if best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, PointSource::Ground));
            }
            break; // roots come sorted; the first valid one wins
        }
    }
    for (i, b) in spec.bumps.iter().enumerate() {
        let coeffs = bump_region_coeffs(&spec.surface, b);
        for s in ray_vs_quadratic(&coeffs, o, d).into_iter().flatten() {
            let p = o + d * s;
            if inside_bump(p.x, p.y, b) {
                if best.is_none_or(|(bs, _)| s < bs) {
                    best = Some((s, PointSource::Bump(i)));
                }
                break;
            }
        }
    }
    best
}

/// Slab test against a yawed cuboid. Returns the entry distance.
fn intersect_box(
    center: &Vector3<f64>,
    half: &Vector3<f64>,
    yaw: f64,
    o: &Vector3<f64>,
    d: &Vector3<f64>,
) -> Option<f64> {
    let (sin, cos) = yaw.sin_cos();
    let to_local = |v: &Vector3<f64>| {
        Vector3::new(cos * v.x + sin * v.y, -sin * v.x + cos * v.y, v.z)
    };
    let ol = to_local(&(o - center));
    let dl = to_local(d);
    let mut s_enter = f64::NEG_INFINITY;
    let mut s_exit = f64::INFINITY;
    for k in 0..3 {
        if dl[k].abs() < 1e-12 {
            if ol[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let t0 = (-half[k] - ol[k]) / dl[k];
        let t1 = (half[k] - ol[k]) / dl[k];
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        s_enter = s_enter.max(lo);
        s_exit = s_exit.min(hi);
        if s_enter > s_exit {
            return None;
        }
    }
    (s_enter > RAY_MIN_S).then_some(s_enter)
}

/// Nearest hit of a world-frame ray against ground, bumps, and obstacles
/// at time `t`, within `max_range`.
fn cast_ray(spec: &SceneSpec, o: &Vector3<f64>, d: &Vector3<f64>, t: f64) -> Option<(f64, PointSource)> {
    let mut best = intersect_surface(spec, o, d);
    for (i, obs) in spec.obstacles.iter().enumerate() {
        let half = Vector3::new(obs.extent[0] / 2.0, obs.extent[1] / 2.0, obs.extent[2] / 2.0);
        if let Some(s) = intersect_box(&obs.center_at(t), &half, obs.yaw, o, d) {
            if best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, PointSource::Obstacle(i)));
            }
        }
    }
    best.filter(|&(s, _)| s <= spec.max_range)
}

/// Simulates one sweep: LiDAR returns with provenance plus the camera
/// masks rendered at mid-sweep.
pub fn simulate_frame(spec: &SceneSpec, frame_index: u32) -> SimulatedFrame {
    let sweep = spec.sweep_duration();
    let t0 = spec.frame_start(frame_index);
    let elevations = spec.beam_elevations();
    let mut points = Vec::new();
    let mut sources = Vec::new();
    for (beam, &elev) in elevations.iter().enumerate() {
        let (sin_e, cos_e) = elev.sin_cos();
        for step in 0..spec.azimuth_steps {
            let frac = step as f64 / spec.azimuth_steps as f64;
            let t = t0 + frac * sweep;
            let azim = 2.0 * PI * frac;
            let (sin_a, cos_a) = azim.sin_cos();
            let dir = Vector3::new(cos_e * cos_a, cos_e * sin_a, sin_e);
            let origin = spec.ego_pose(t).translation + Vector3::new(0.0, 0.0, spec.lidar_height);
            let Some((s_ideal, source)) = cast_ray(spec, &origin, &dir, t) else {
                continue;
            };
            let mut rng = StreamRng::new(
                spec.seed,
                &[RAY_STREAM_TAG, frame_index as u64, beam as u64, step as u64],
            );
            let reflectivity = match source {
                PointSource::Obstacle(i) => {
                    let r = spec.obstacles[i].reflectivity;
                    if !(rng.next_f64() < r) {
                        continue;
                    }
                    r
                }
                _ => 1.0,
            };
            let range = s_ideal + spec.noise_sigma * rng.gauss().clamp(-6.0, 6.0);
            if range <= RAY_MIN_S || range > spec.max_range {
                continue;
            }
            let p = dir * range;
            points.push(Point {
                x: p.x,
                y: p.y,
                z: p.z,
                intensity: reflectivity,
                timestamp: t,
            });
            sources.push(source);
        }
    }
    let frame_time = spec.frame_time(frame_index);
    let masks = render_masks(spec, frame_index, frame_time);
    SimulatedFrame {
        cloud: PointCloud {
            frame_index,
            points,
        },
        sources,
        frame_time,
        camera_time: frame_time,
        masks,
    }
}

fn render_masks(spec: &SceneSpec, frame_index: u32, t: f64) -> FrameMasks {
    let cam = spec.camera.to_calibration(0);
    let (w, h) = (cam.width, cam.height);
    let ego = spec.ego_pose(t).translation;
    let origin = ego + Vector3::from(spec.camera.position);
    let cam_to_world = forward_camera_rotation().transpose();

    let mut road = LabelMask::new_filled(MaskKind::Road, 0, frame_index, w, h, 0);
    let mut instance = LabelMask::new_filled(MaskKind::Instance, 0, frame_index, w, h, 0);
    let mut candidate = LabelMask::new_filled(MaskKind::ObstacleCandidate, 0, frame_index, w, h, 0);
    let mut depth = vec![f64::INFINITY; (w as usize) * (h as usize)];

    let pixel_ray = |u: u32, v: u32| -> Vector3<f64> {
        let dc = Vector3::new(
            (u as f64 + 0.5 - cam.cx) / cam.fx,
            (v as f64 + 0.5 - cam.cy) / cam.fy,
            1.0,
        );
        (cam_to_world * dc).normalize()
    };

    // Ground pass: road label where the nearest surface hit lies on the
    // road strip (bumps included).
    for v in 0..h {
        for u in 0..w {
            let dir = pixel_ray(u, v);
            if let Some((s, _)) = intersect_surface(spec, &origin, &dir) {
                depth[(v * w + u) as usize] = s;
                let p = origin + dir * s;
                if spec.on_road(p.y) {
                    road.set(u, v, 1);
                }
            }
        }
    }

    // Obstacle passes over their projected bounding rectangles.
    for (i, obs) in spec.obstacles.iter().enumerate() {
        let center = obs.center_at(t);
        let half = Vector3::new(obs.extent[0] / 2.0, obs.extent[1] / 2.0, obs.extent[2] / 2.0);
        let (sin, cos) = obs.yaw.sin_cos();
        let mut rect: Option<(f64, f64, f64, f64)> = None;
        let mut any_behind = false;
        for &sx in &[-1.0, 1.0] {
            for &sy in &[-1.0, 1.0] {
                for &sz in &[-1.0, 1.0] {
                    let local = Vector3::new(sx * half.x, sy * half.y, sz * half.z);
                    let corner = center
                        + Vector3::new(
                            cos * local.x - sin * local.y,
                            sin * local.x + cos * local.y,
                            local.z,
                        );
                    let c = cam.extrinsic.apply(&(corner - ego));
                    if c.z <= 1e-9 {
                        any_behind = true;
                        continue;
                    }
                    let u = cam.fx * c.x / c.z + cam.cx;
                    let v = cam.fy * c.y / c.z + cam.cy;
                    rect = Some(match rect {
                        None => (u, u, v, v),
                        Some((ulo, uhi, vlo, vhi)) => {
                            (ulo.min(u), uhi.max(u), vlo.min(v), vhi.max(v))
                        }
                    });
                }
            }
        }
        let Some(r) = rect else {
            continue; // fully behind the camera
        };
        // A corner behind the image plane invalidates the bound; fall back
        // to the full image.
        let (ulo, uhi, vlo, vhi) = if any_behind {
            (0.0, (w - 1) as f64, 0.0, (h - 1) as f64)
        } else {
            r
        };
        let u_range = (ulo.floor().max(0.0) as u32)..=(uhi.ceil().min((w - 1) as f64) as u32);
        let v_range = (vlo.floor().max(0.0) as u32)..=(vhi.ceil().min((h - 1) as f64) as u32);
        if u_range.is_empty() || v_range.is_empty() {
            continue;
        }
        let id = (i + 1) as u16;
        for v in v_range {
            for u in u_range.clone() {
                let dir = pixel_ray(u, v);
                if let Some(s) = intersect_box(&center, &half, obs.yaw, &origin, &dir) {
                    let slot = (v * w + u) as usize;
                    if s < depth[slot] {
                        depth[slot] = s;
                        instance.set(u, v, id);
                        candidate.set(u, v, 1);
                        road.set(u, v, 0);
                    }
                }
            }
        }
    }
    FrameMasks {
        road,
        instance,
        obstacle_candidate: candidate,
    }
}

/// Ground-truth boxes for every frame at its mid-sweep reference time,
/// with finite-difference kinematics over the per-frame centers.
fn gt_boxes(spec: &SceneSpec) -> Vec<Box3D> {
    let n = spec.n_frames();
    let times: Vec<f64> = (1..=n).map(|i| spec.frame_time(i)).collect();
    let mut boxes = Vec::new();
    for (j, obs) in spec.obstacles.iter().enumerate() {
        let centers: Vec<[f64; 2]> = times
            .iter()
            .map(|&t| {
                let c = obs.center_at(t);
                [c.x, c.y]
            })
            .collect();
        let v = kinematics::velocities(&times, &centers);
        let a = kinematics::accelerations(&times, &centers);
        let (l, w, mut theta) = if obs.extent[1] > obs.extent[0] {
            (obs.extent[1], obs.extent[0], obs.yaw + PI / 2.0)
        } else {
            (obs.extent[0], obs.extent[1], obs.yaw)
        };
        theta = theta.rem_euclid(PI);
        for (k, &t) in times.iter().enumerate() {
            let c = obs.center_at(t);
            boxes.push(Box3D {
                frame_index: (k + 1) as u32,
                id: (j + 1) as u64,
                class: obs.class.clone(),
                x: c.x,
                y: c.y,
                z: c.z,
                w,
                h: obs.extent[2],
                l,
                theta,
                v: v[k],
                a: a[k],
            });
        }
    }
    boxes
}

fn poses(spec: &SceneSpec) -> Vec<Pose> {
    let span = spec.duration + 2.0 * POSE_MARGIN_S;
    let count = (span * POSE_RATE_HZ).ceil() as usize + 1;
    (0..count)
        .map(|k| {
            let t = k as f64 / POSE_RATE_HZ - POSE_MARGIN_S;
            Pose {
                timestamp: t,
                transform: spec.ego_pose(t),
            }
        })
        .collect()
}

/// Generates the complete dataset tree under `out`.
pub fn generate(spec: &SceneSpec, out: &Path) -> Result<SequenceManifest> {
    spec.validate()?;
    let n = spec.n_frames();
    let mut frame_timestamps = Vec::with_capacity(n as usize);
    let mut camera_timestamps = vec![Vec::with_capacity(n as usize)];
    for i in 1..=n {
        let frame = simulate_frame(spec, i);
        save_point_cloud(&out.join("lidar").join(frame_file_name(i)), &frame.cloud)?;
        for mask in [
            &frame.masks.road,
            &frame.masks.instance,
            &frame.masks.obstacle_candidate,
        ] {
            save_mask(&out.join(mask_rel_path(mask.kind, 0, i)), mask)?;
        }
        frame_timestamps.push(frame.frame_time);
        camera_timestamps[0].push(frame.camera_time);
    }

    save_poses(&out.join("poses.csv"), &poses(spec))?;
    save_calibration(
        &out.join("calibration.json"),
        &Calibration {
            lidar_extrinsic: RigidTransform {
                rotation: Matrix3::identity(),
                translation: Vector3::new(0.0, 0.0, spec.lidar_height),
            },
            cameras: vec![spec.camera.to_calibration(0)],
        },
    )?;

    let classes: BTreeMap<u16, String> = spec
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| ((i + 1) as u16, o.class.clone()))
        .collect();
    save_instance_classes(&out.join("masks").join("instances.csv"), &classes)?;
    save_boxes(&out.join("gt").join("boxes.csv"), &gt_boxes(spec))?;

    let manifest = SequenceManifest {
        sequence_id: spec.sequence_id.clone(),
        n_frames: n,
        n_cameras: 1,
        frame_timestamps,
        camera_timestamps,
    };
    save_manifest(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
