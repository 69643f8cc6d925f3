//! Ground segmentation: per-tile RANSAC planes.
//!
//! The ego-frame cloud is partitioned into square x/y tiles. Each tile
//! fits a plane by RANSAC (deterministic sampling keyed by tile), rejects
//! planes tilted more than `max_tilt_deg` from horizontal, refines the
//! consensus set with a least-squares refit, and labels inliers as ground.
//! Tiles with fewer than 3 points are entirely non-ground.

pub mod anomaly;

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundParams {
    /// Tile edge length in meters.
    pub tile_size: f64,
    /// Max point-to-plane distance for an inlier (inclusive), meters.
    pub inlier_dist: f64,
    /// Max angle between the plane normal and vertical, degrees.
    pub max_tilt_deg: f64,
    pub ransac_iterations: usize,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        GroundParams {
            tile_size: 5.0,
            inlier_dist: 0.20,
            max_tilt_deg: 15.0,
            ransac_iterations: 32,
            seed: 0,
        }
    }
}

impl GroundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tile_size > 0.0) {
            return Err(Error::validation("ground.tile_size", "must be positive"));
        }
        if !(self.inlier_dist > 0.0) {
            return Err(Error::validation("ground.inlier_dist", "must be positive"));
        }
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 90.0) {
            return Err(Error::validation(
                "ground.max_tilt_deg",
                "must be in (0, 90)",
            ));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::validation("ground.ransac_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Plane `normal . p = offset` with unit normal, `normal.z > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilePlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inliers: usize,
}

impl TilePlane {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (self.normal.dot(p) - self.offset).abs()
    }
}

#[derive(Debug, Clone)]
pub struct GroundSegmentation {
    /// Aligned with the input points.
    pub is_ground: Vec<bool>,
    /// Fitted plane per tile that found one.
    pub tiles: BTreeMap<(i64, i64), TilePlane>,
}

fn plane_from_three(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len < 1e-12 {
        return None;
    }
    let mut n = n / len;
    if n.z < 0.0 {
        n = -n;
    }
    Some((n, n.dot(a)))
}

/// Total-least-squares plane through the points: centroid plus smallest
/// covariance eigenvector.
fn plane_lsq(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, f64)> {
    if points.len() < 3 {
        return None;
    }
    let mean: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let min_idx = (0..3)
        .min_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
        .unwrap();
    let mut n: Vector3<f64> = eig.eigenvectors.column(min_idx).into();
    let len = n.norm();
    if len < 1e-12 {
        return None;
    }
    n /= len;
    if n.z < 0.0 {
        n = -n;
    }
    Some((n, n.dot(&mean)))
}

pub fn segment_ground(points: &[Vector3<f64>], params: &GroundParams) -> Result<GroundSegmentation> {
    params.validate()?;
    let min_nz = params.max_tilt_deg.to_radians().cos();
    let inv_tile = 1.0 / params.tile_size;

    let mut tiles_idx: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let key = ((p.x * inv_tile).floor() as i64, (p.y * inv_tile).floor() as i64);
        tiles_idx.entry(key).or_default().push(i);
    }

    let mut is_ground = vec![false; points.len()];
    let mut tiles = BTreeMap::new();
    for (&(tx, ty), idx) in &tiles_idx {
        if idx.len() < 3 {
            continue;
        }
        let mut rng = StreamRng::new(params.seed, &[0x67726e64, tx as u64, ty as u64]);
        let mut candidates: Vec<(Vector3<f64>, f64, usize)> = Vec::new();
        for _ in 0..params.ransac_iterations {
            let mut pick = [0usize; 3];
            pick[0] = idx[rng.index(idx.len())];
            loop {
                pick[1] = idx[rng.index(idx.len())];
                if pick[1] != pick[0] {
                    break;
                }
            }
            loop {
                pick[2] = idx[rng.index(idx.len())];
                if pick[2] != pick[0] && pick[2] != pick[1] {
                    break;
                }
            }
            let Some((n, d)) = plane_from_three(&points[pick[0]], &points[pick[1]], &points[pick[2]])
            else {
                continue;
            };
            if n.z < min_nz {
                continue;
            }
            let inliers = idx
                .iter()
                .filter(|&&i| (n.dot(&points[i]) - d).abs() <= params.inlier_dist)
                .count();
            candidates.push((n, d, inliers));
        }
        // Ground is the lowest surface in a tile: a real ground plane has
        // (noise aside) nothing underneath it, while a tilted plane that
        // grazes a tall structure leaves true ground below on one side,
        // no matter how many inliers it collects. Reject such planes.
        let below_cap = (idx.len() / 100).max(3);
        let cx = (tx as f64 + 0.5) * params.tile_size;
        let cy = (ty as f64 + 0.5) * params.tile_size;
        let (mut n, mut d, _) = match candidates
            .into_iter()
            .filter(|(n, d, _)| {
                idx.iter()
                    .filter(|&&i| n.dot(&points[i]) - d < -params.inlier_dist)
                    .count()
                    <= below_cap
            })
            .min_by(|a, b| {
                let za = (a.1 - a.0.x * cx - a.0.y * cy) / a.0.z;
                let zb = (b.1 - b.0.x * cx - b.0.y * cy) / b.0.z;
                b.2.cmp(&a.2).then(za.total_cmp(&zb))
            }) {
            Some(c) => c,
            None => continue,
        };
        // Refine on the consensus set; keep the sample plane if the refit
        // tilts out of bounds.
        let consensus: Vec<Vector3<f64>> = idx
            .iter()
            .filter(|&&i| (n.dot(&points[i]) - d).abs() <= params.inlier_dist)
            .map(|&i| points[i])
            .collect();
        if let Some((rn, rd)) = plane_lsq(&consensus) {
            if rn.z >= min_nz {
                (n, d) = (rn, rd);
            }
        }
        let mut inliers = 0usize;
        for &i in idx {
            if (n.dot(&points[i]) - d).abs() <= params.inlier_dist {
                is_ground[i] = true;
                inliers += 1;
            }
        }
        tiles.insert(
            (tx, ty),
            TilePlane {
                normal: n,
                offset: d,
                inliers,
            },
        );
    }
    Ok(GroundSegmentation { is_ground, tiles })
}
