//! Pipeline configuration: one JSON file collecting every stage tunable.
//!
//! Every key is optional and falls back to the stage default; unknown keys
//! are rejected so typos cannot silently revert a knob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::DbscanParams;
use crate::error::{Error, Result};
use crate::ground::anomaly::AnomalyParams;
use crate::ground::GroundParams;
use crate::maskproc::MaskprocParams;
use crate::register::GicpConfig;
use crate::track::TrackerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanSection {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanSection {
    fn default() -> Self {
        let d = DbscanParams::default();
        DbscanSection {
            eps: d.eps,
            min_pts: d.min_pts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GicpSection {
    pub k_neighbors: usize,
    pub cov_epsilon: f64,
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    pub translation_tol: f64,
    pub rotation_tol: f64,
}

impl Default for GicpSection {
    fn default() -> Self {
        let d = GicpConfig::default();
        GicpSection {
            k_neighbors: d.k_neighbors,
            cov_epsilon: d.cov_epsilon,
            max_corr_dist: d.max_corr_dist,
            max_iterations: d.max_iterations,
            translation_tol: d.translation_tol,
            rotation_tol: d.rotation_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundSection {
    pub tile_m: f64,
    pub inlier_m: f64,
    pub max_tilt_deg: f64,
}

impl Default for GroundSection {
    fn default() -> Self {
        let d = GroundParams::default();
        GroundSection {
            tile_m: d.tile_size,
            inlier_m: d.inlier_dist,
            max_tilt_deg: d.max_tilt_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalySection {
    pub cell_m: f64,
    pub residual_m: f64,
    pub min_cells: usize,
}

impl Default for AnomalySection {
    fn default() -> Self {
        let d = AnomalyParams::default();
        AnomalySection {
            cell_m: d.cell_size,
            residual_m: d.residual_threshold,
            min_cells: d.min_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackSection {
    pub gate_m: f64,
    pub max_miss: u32,
    pub min_lifetime: usize,
}

impl Default for TrackSection {
    fn default() -> Self {
        let d = TrackerParams::default();
        TrackSection {
            gate_m: d.gate_base,
            max_miss: d.max_miss,
            min_lifetime: d.min_lifetime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseSection {
    pub overlap_frac: f64,
    pub merge_dist_m: f64,
    pub max_extent_m: f64,
}

impl Default for FuseSection {
    fn default() -> Self {
        FuseSection {
            overlap_frac: 0.5,
            merge_dist_m: 1.0,
            max_extent_m: TrackerParams::default().max_extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskprocSection {
    pub min_area_px: usize,
    /// Absolute pixel cap; `null` keeps the default fraction of the image.
    pub max_area_px: Option<usize>,
}

impl Default for MaskprocSection {
    fn default() -> Self {
        MaskprocSection {
            min_area_px: MaskprocParams::default().min_area,
            max_area_px: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub dbscan: DbscanSection,
    pub gicp: GicpSection,
    pub ground: GroundSection,
    pub anomaly: AnomalySection,
    pub track: TrackSection,
    pub fuse: FuseSection,
    pub maskproc: MaskprocSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, None, format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.dbscan_params().validate()?;
        self.gicp_config().validate()?;
        self.ground_params().validate()?;
        self.anomaly_params().validate()?;
        self.tracker_params().validate()?;
        self.maskproc_params().validate()?;
        if !(self.fuse.overlap_frac > 0.0 && self.fuse.overlap_frac <= 1.0) {
            return Err(Error::validation("fuse.overlap_frac", "must be in (0, 1]"));
        }
        if !(self.fuse.merge_dist_m > 0.0) {
            return Err(Error::validation("fuse.merge_dist_m", "must be positive"));
        }
        Ok(())
    }

    pub fn dbscan_params(&self) -> DbscanParams {
        DbscanParams {
            eps: self.dbscan.eps,
            min_pts: self.dbscan.min_pts,
        }
    }

    pub fn gicp_config(&self) -> GicpConfig {
        GicpConfig {
            k_neighbors: self.gicp.k_neighbors,
            cov_epsilon: self.gicp.cov_epsilon,
            max_corr_dist: self.gicp.max_corr_dist,
            max_iterations: self.gicp.max_iterations,
            translation_tol: self.gicp.translation_tol,
            rotation_tol: self.gicp.rotation_tol,
        }
    }

    pub fn ground_params(&self) -> GroundParams {
        GroundParams {
            tile_size: self.ground.tile_m,
            inlier_dist: self.ground.inlier_m,
            max_tilt_deg: self.ground.max_tilt_deg,
            ..GroundParams::default()
        }
    }

    pub fn anomaly_params(&self) -> AnomalyParams {
        AnomalyParams {
            cell_size: self.anomaly.cell_m,
            residual_threshold: self.anomaly.residual_m,
            min_cells: self.anomaly.min_cells,
        }
    }

    pub fn tracker_params(&self) -> TrackerParams {
        TrackerParams {
            gate_base: self.track.gate_m,
            max_miss: self.track.max_miss,
            min_lifetime: self.track.min_lifetime,
            max_extent: self.fuse.max_extent_m,
            ..TrackerParams::default()
        }
    }

    /// Per-image parameters; the optional pixel cap overrides the default
    /// area fraction given the image size.
    pub fn maskproc_params(&self) -> MaskprocParams {
        MaskprocParams {
            min_area: self.maskproc.min_area_px,
            ..MaskprocParams::default()
        }
    }

    pub fn maskproc_params_for(&self, width: u32, height: u32) -> MaskprocParams {
        let mut p = self.maskproc_params();
        if let Some(px) = self.maskproc.max_area_px {
            p.max_area_frac = (px as f64 / (width as f64 * height as f64)).min(1.0);
        }
        p
    }
}
