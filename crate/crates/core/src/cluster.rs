//! Density clustering of non-ground points.
//!
//! Deterministic DBSCAN: seeds are tried in ascending index order, the
//! expansion queue is FIFO with neighbor lists sorted ascending, and a
//! border point belongs to the first cluster that reaches it. Distances
//! compare inclusively (<= eps) and a point is its own neighbor.

use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    /// Minimum neighborhood size (including the point itself) for a core
    /// point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 0.8,
            min_pts: 5,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::validation("dbscan.eps", "must be positive"));
        }
        if self.min_pts == 0 {
            return Err(Error::validation("dbscan.min_pts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-point label: `None` is noise, `Some(c)` the 0-based cluster id in
/// order of cluster creation.
pub type Labels = Vec<Option<usize>>;

/// Uniform hash grid with cell edge eps; candidate neighbors come from the
/// 27 surrounding cells.
struct NeighborGrid {
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    eps2: f64,
    inv_eps: f64,
}

impl NeighborGrid {
    fn new(points: &[Vector3<f64>], eps: f64) -> Self {
        let inv_eps = 1.0 / eps;
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::cell_of(p, inv_eps))
                .or_default()
                .push(i);
        }
        NeighborGrid {
            cells,
            eps2: eps * eps,
            inv_eps,
        }
    }

    fn cell_of(p: &Vector3<f64>, inv_eps: f64) -> (i64, i64, i64) {
        (
            (p.x * inv_eps).floor() as i64,
            (p.y * inv_eps).floor() as i64,
            (p.z * inv_eps).floor() as i64,
        )
    }

    /// Indices with distance <= eps from `points[i]`, ascending, self
    /// included.
    fn neighbors(&self, points: &[Vector3<f64>], i: usize) -> Vec<usize> {
        let p = &points[i];
        let (cx, cy, cz) = Self::cell_of(p, self.inv_eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in ids {
                            if (points[j] - p).norm_squared() <= self.eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn dbscan(points: &[Vector3<f64>], params: &DbscanParams) -> Result<Labels> {
    params.validate()?;
    let grid = NeighborGrid::new(points, params.eps);
    dbscan_with(points, params, |i| grid.neighbors(points, i))
}

/// Quadratic-time reference with identical expansion rules, used to
/// validate the grid-accelerated version.
pub fn dbscan_brute_force(points: &[Vector3<f64>], params: &DbscanParams) -> Result<Labels> {
    params.validate()?;
    let eps2 = params.eps * params.eps;
    dbscan_with(points, params, |i| {
        (0..points.len())
            .filter(|&j| (points[j] - points[i]).norm_squared() <= eps2)
            .collect()
    })
}

fn dbscan_with<F>(points: &[Vector3<f64>], params: &DbscanParams, neighbors_of: F) -> Result<Labels>
where
    F: Fn(usize) -> Vec<usize>,
{
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unvisited,
        Noise,
        Clustered,
    }
    let n = points.len();
    let mut labels: Labels = vec![None; n];
    let mut state = vec![State::Unvisited; n];
    let mut next_cluster = 0usize;

    for seed in 0..n {
        if state[seed] != State::Unvisited {
            continue;
        }
        let seed_neighbors = neighbors_of(seed);
        if seed_neighbors.len() < params.min_pts {
            state[seed] = State::Noise;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[seed] = Some(cluster);
        state[seed] = State::Clustered;
        let mut queue: VecDeque<usize> = seed_neighbors.into();
        while let Some(j) = queue.pop_front() {
            match state[j] {
                State::Clustered => continue,
                State::Noise => {
                    // Border point reached from a core point.
                    labels[j] = Some(cluster);
                    state[j] = State::Clustered;
                }
                State::Unvisited => {
                    labels[j] = Some(cluster);
                    state[j] = State::Clustered;
                    let nbrs = neighbors_of(j);
                    if nbrs.len() >= params.min_pts {
                        queue.extend(nbrs);
                    }
                }
            }
        }
    }
    Ok(labels)
}

/// Groups point indices by cluster label, ascending within each cluster.
pub fn clusters_from_labels(labels: &Labels) -> Vec<Vec<usize>> {
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); n_clusters];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            out[*c].push(i);
        }
    }
    out
}
