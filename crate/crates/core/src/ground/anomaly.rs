//! World-frame road surface model and anomaly detection.
//!
//! On-road ground points accumulate into a 2D grid of world-frame cells.
//! Each cell is tested against a local quadratic surface
//! `z = a + b*x + c*y + d*x^2 + e*x*y + f*y^2` fitted by least squares to
//! the points of the 5x5 cell neighborhood around it, excluding the cell
//! itself: a cell does not vote on its own reference surface, so a tall
//! anomaly cannot absorb itself into the fit. A cell whose own points
//! deviate from that surface by more than a threshold (mean absolute
//! residual) is anomalous; 4-connected groups of anomalous cells form
//! clusters. Small protrusions that survive ground segmentation (curbs,
//! debris, lost cargo) show up here.

use std::collections::BTreeMap;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

/// Points required in the surrounding cells before a quadratic is attempted.
pub const MIN_FIT_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyParams {
    /// Grid cell edge length, meters.
    pub cell_size: f64,
    /// Mean absolute residual above which a cell is anomalous, meters.
    pub residual_threshold: f64,
    /// Minimum cells per reported cluster.
    pub min_cells: usize,
}

impl Default for AnomalyParams {
    fn default() -> Self {
        AnomalyParams {
            cell_size: 0.5,
            residual_threshold: 0.15,
            min_cells: 2,
        }
    }
}

impl AnomalyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::validation("anomaly.cell_size", "must be positive"));
        }
        if !(self.residual_threshold > 0.0) {
            return Err(Error::validation(
                "anomaly.residual_threshold",
                "must be positive",
            ));
        }
        if self.min_cells == 0 {
            return Err(Error::validation("anomaly.min_cells", "must be >= 1"));
        }
        Ok(())
    }
}

/// A 4-connected group of anomalous cells.
#[derive(Debug, Clone)]
pub struct AnomalyCluster {
    /// Member cells in key order.
    pub cells: Vec<(i64, i64)>,
    /// All accumulated points of the member cells, world frame.
    pub points: Vec<Vector3<f64>>,
    pub centroid: Vector3<f64>,
}

/// Accumulated road surface observations in the world frame.
#[derive(Debug, Clone)]
pub struct RoadWorldModel {
    cell_size: f64,
    cells: BTreeMap<(i64, i64), Vec<Vector3<f64>>>,
}

impl RoadWorldModel {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        RoadWorldModel {
            cell_size,
            cells: BTreeMap::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn key_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    pub fn insert(&mut self, p: Vector3<f64>) {
        let key = self.key_of(p.x, p.y);
        self.cells.entry(key).or_default().push(p);
    }

    pub fn insert_all<I: IntoIterator<Item = Vector3<f64>>>(&mut self, points: I) {
        for p in points {
            self.insert(p);
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_points(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// True when any occupied cell region intersects the disk of `radius`
    /// around `(x, y)`.
    pub fn is_near_road(&self, x: f64, y: f64, radius: f64) -> bool {
        let (kx_lo, ky_lo) = self.key_of(x - radius, y - radius);
        let (kx_hi, ky_hi) = self.key_of(x + radius, y + radius);
        let r2 = radius * radius;
        for kx in kx_lo..=kx_hi {
            for ky in ky_lo..=ky_hi {
                if !self.cells.contains_key(&(kx, ky)) {
                    continue;
                }
                let lo_x = kx as f64 * self.cell_size;
                let lo_y = ky as f64 * self.cell_size;
                let cx = x.clamp(lo_x, lo_x + self.cell_size);
                let cy = y.clamp(lo_y, lo_y + self.cell_size);
                if (cx - x).powi(2) + (cy - y).powi(2) <= r2 {
                    return true;
                }
            }
        }
        false
    }

    /// Mean absolute residual of each cell's own points against the local
    /// quadratic. Cells whose surrounding neighborhood is too sparse to fit
    /// are absent.
    pub fn cell_residuals(&self) -> BTreeMap<(i64, i64), f64> {
        let mut out = BTreeMap::new();
        for (&key, own) in &self.cells {
            if let Some(r) = self.residual_at(key, own) {
                out.insert(key, r);
            }
        }
        out
    }

    fn residual_at(&self, key: (i64, i64), own: &[Vector3<f64>]) -> Option<f64> {
        if own.is_empty() {
            return None;
        }
        // Center coordinates on the cell to keep the normal equations well
        // conditioned.
        let cx = (key.0 as f64 + 0.5) * self.cell_size;
        let cy = (key.1 as f64 + 0.5) * self.cell_size;
        let mut ata = SMatrix::<f64, 6, 6>::zeros();
        let mut atz = SVector::<f64, 6>::zeros();
        let mut count = 0usize;
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let Some(pts) = self.cells.get(&(key.0 + dx, key.1 + dy)) else {
                    continue;
                };
                for p in pts {
                    let (x, y) = (p.x - cx, p.y - cy);
                    let row = SVector::<f64, 6>::from([1.0, x, y, x * x, x * y, y * y]);
                    ata += row * row.transpose();
                    atz += row * p.z;
                    count += 1;
                }
            }
        }
        if count < MIN_FIT_POINTS {
            return None;
        }
        let coeff = match ata.cholesky() {
            Some(ch) => ch.solve(&atz),
            None => ata.lu().solve(&atz)?,
        };
        let sum: f64 = own
            .iter()
            .map(|p| {
                let (x, y) = (p.x - cx, p.y - cy);
                let z_fit = coeff[0]
                    + coeff[1] * x
                    + coeff[2] * y
                    + coeff[3] * x * x
                    + coeff[4] * x * y
                    + coeff[5] * y * y;
                (p.z - z_fit).abs()
            })
            .sum();
        Some(sum / own.len() as f64)
    }

    pub fn detect_anomalies(&self, params: &AnomalyParams) -> Result<Vec<AnomalyCluster>> {
        params.validate()?;
        if (params.cell_size - self.cell_size).abs() > 1e-12 {
            return Err(Error::validation(
                "anomaly.cell_size",
                "does not match the model grid",
            ));
        }
        let anomalous: Vec<(i64, i64)> = self
            .cell_residuals()
            .into_iter()
            .filter(|&(_, r)| r > params.residual_threshold)
            .map(|(k, _)| k)
            .collect();
        let member: std::collections::BTreeSet<(i64, i64)> = anomalous.iter().copied().collect();

        let mut visited = std::collections::BTreeSet::new();
        let mut clusters = Vec::new();
        for &start in &anomalous {
            if visited.contains(&start) {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            visited.insert(start);
            let mut cells = Vec::new();
            while let Some(cell) = queue.pop_front() {
                cells.push(cell);
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let next = (cell.0 + dx, cell.1 + dy);
                    if member.contains(&next) && visited.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
            if cells.len() < params.min_cells {
                continue;
            }
            cells.sort_unstable();
            let mut points = Vec::new();
            for cell in &cells {
                points.extend_from_slice(&self.cells[cell]);
            }
            let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
            clusters.push(AnomalyCluster {
                cells,
                points,
                centroid,
            });
        }
        Ok(clusters)
    }
}
