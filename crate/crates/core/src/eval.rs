//! Evaluation protocol: per-frame center-distance matching and BEV grid
//! heatmaps for precision, recall, displacement, extent error, and
//! track-id changes.
//!
//! The grid covers the ego-forward area: 10 longitudinal rows of 10 m over
//! [0, 100) and 6 lateral columns of 4 m over [-12, 12). All box positions
//! entering this module are ego-frame (x forward, y left).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::dataset::poses_io::load_poses;
use crate::dataset::{load_boxes, load_manifest};
use crate::error::{Error, Result};
use crate::transform::interpolate_pose;
use crate::types::Box3D;

pub const GRID_ROWS: usize = 10;
pub const GRID_COLS: usize = 6;
/// Longitudinal cell edge (meters, forward).
pub const CELL_X: f64 = 10.0;
/// Lateral cell edge (meters).
pub const CELL_Y: f64 = 4.0;
pub const LATERAL_MIN: f64 = -12.0;
/// A prediction is accurate when its BEV center is closer than this.
pub const MATCH_DIST: f64 = 1.0;

/// Row-major cell grid; `None` marks cells without samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    values: Vec<Option<f64>>,
}

impl Default for HeatmapGrid {
    fn default() -> Self {
        Self::new()
    }
}

impl HeatmapGrid {
    pub fn new() -> Self {
        HeatmapGrid {
            values: vec![None; GRID_ROWS * GRID_COLS],
        }
    }

    /// All cells present with value zero (used for count grids).
    pub fn zeros() -> Self {
        HeatmapGrid {
            values: vec![Some(0.0); GRID_ROWS * GRID_COLS],
        }
    }

    /// Cell (row, col) covering the ego-frame BEV position, or `None`
    /// outside the grid. Cell (r, c) spans x in [10r, 10r+10) and
    /// y in [-12+4c, -8+4c).
    pub fn cell_of(x: f64, y: f64) -> Option<(usize, usize)> {
        if !(0.0..GRID_ROWS as f64 * CELL_X).contains(&x) {
            return None;
        }
        if !(LATERAL_MIN..LATERAL_MIN + GRID_COLS as f64 * CELL_Y).contains(&y) {
            return None;
        }
        let r = (x / CELL_X).floor() as usize;
        let c = ((y - LATERAL_MIN) / CELL_Y).floor() as usize;
        Some((r.min(GRID_ROWS - 1), c.min(GRID_COLS - 1)))
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.values[r * GRID_COLS + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Option<f64>) {
        self.values[r * GRID_COLS + c] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let slot = &mut self.values[r * GRID_COLS + c];
        *slot = Some(slot.unwrap_or(0.0) + v);
    }
}

/// One-to-one matching of a frame's boxes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// (gt index, pred index) true-positive pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedy one-to-one matching by ascending BEV center distance; pairs are
/// admitted strictly below `max_dist`, ties broken by (gt id, pred id).
pub fn match_frame_with(gt: &[Box3D], pred: &[Box3D], max_dist: f64) -> MatchResult {
    let mut edges: Vec<(f64, u64, u64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let d = ((g.x - p.x).powi(2) + (g.y - p.y).powi(2)).sqrt();
            if d < max_dist {
                edges.push((d, g.id, p.id, gi, pi));
            }
        }
    }
    edges.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut gt_taken = vec![false; gt.len()];
    let mut pred_taken = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (_, _, _, gi, pi) in edges {
        if !gt_taken[gi] && !pred_taken[pi] {
            gt_taken[gi] = true;
            pred_taken[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs.sort_unstable();
    MatchResult {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_taken[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_taken[i]).collect(),
    }
}

pub fn match_frame(gt: &[Box3D], pred: &[Box3D]) -> MatchResult {
    match_frame_with(gt, pred, MATCH_DIST)
}

/// One true-positive pair, retained for grid accumulation.
#[derive(Debug, Clone)]
struct MatchEvent {
    frame_index: u32,
    gt_id: u64,
    pred_id: u64,
    gt_pos: [f64; 2],
    pred_pos: [f64; 2],
    extent_err: [f64; 3],
}

/// Collects match outcomes across frames; all grids are derived at
/// [`EvalAccumulator::finalize`], so the result does not depend on the
/// order frames were added in.
#[derive(Debug, Default)]
pub struct EvalAccumulator {
    events: Vec<MatchEvent>,
    false_positives: Vec<[f64; 2]>,
    false_negatives: Vec<[f64; 2]>,
}

/// Final grids plus global tallies. Count grids are kept alongside the
/// rate grids so callers can aggregate regions without re-matching.
#[derive(Debug)]
pub struct EvalReport {
    pub precision: HeatmapGrid,
    pub recall: HeatmapGrid,
    pub long_disp: HeatmapGrid,
    pub lat_disp: HeatmapGrid,
    pub len_err: HeatmapGrid,
    pub wid_err: HeatmapGrid,
    pub hei_err: HeatmapGrid,
    pub id_changes: HeatmapGrid,
    /// TP/FP counts binned by predicted center.
    pub tp_pred_cells: HeatmapGrid,
    pub fp_pred_cells: HeatmapGrid,
    /// TP/FN counts binned by GT center.
    pub tp_gt_cells: HeatmapGrid,
    pub fn_gt_cells: HeatmapGrid,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Matches one frame of ego-frame boxes and records the outcomes.
    pub fn add_frame(&mut self, gt: &[Box3D], pred: &[Box3D]) {
        let m = match_frame(gt, pred);
        for &(gi, pi) in &m.pairs {
            let g = &gt[gi];
            let p = &pred[pi];
            self.events.push(MatchEvent {
                frame_index: g.frame_index,
                gt_id: g.id,
                pred_id: p.id,
                gt_pos: [g.x, g.y],
                pred_pos: [p.x, p.y],
                extent_err: [(p.l - g.l).abs(), (p.w - g.w).abs(), (p.h - g.h).abs()],
            });
        }
        for &gi in &m.unmatched_gt {
            self.false_negatives.push([gt[gi].x, gt[gi].y]);
        }
        for &pi in &m.unmatched_pred {
            self.false_positives.push([pred[pi].x, pred[pi].y]);
        }
    }

    pub fn finalize(&self) -> EvalReport {
        let mut tp_pred = HeatmapGrid::zeros();
        let mut fp_pred = HeatmapGrid::zeros();
        let mut tp_gt = HeatmapGrid::zeros();
        let mut fn_gt = HeatmapGrid::zeros();
        // Per-GT-cell sums: [long, lat, len, wid, hei] and the TP count.
        let mut sums = vec![[0.0f64; 5]; GRID_ROWS * GRID_COLS];
        let mut counts = vec![0usize; GRID_ROWS * GRID_COLS];

        for e in &self.events {
            if let Some((r, c)) = HeatmapGrid::cell_of(e.pred_pos[0], e.pred_pos[1]) {
                tp_pred.add(r, c, 1.0);
            }
            if let Some((r, c)) = HeatmapGrid::cell_of(e.gt_pos[0], e.gt_pos[1]) {
                tp_gt.add(r, c, 1.0);
                let k = r * GRID_COLS + c;
                sums[k][0] += (e.pred_pos[0] - e.gt_pos[0]).abs();
                sums[k][1] += (e.pred_pos[1] - e.gt_pos[1]).abs();
                sums[k][2] += e.extent_err[0];
                sums[k][3] += e.extent_err[1];
                sums[k][4] += e.extent_err[2];
                counts[k] += 1;
            }
        }
        for p in &self.false_positives {
            if let Some((r, c)) = HeatmapGrid::cell_of(p[0], p[1]) {
                fp_pred.add(r, c, 1.0);
            }
        }
        for p in &self.false_negatives {
            if let Some((r, c)) = HeatmapGrid::cell_of(p[0], p[1]) {
                fn_gt.add(r, c, 1.0);
            }
        }

        let ratio = |num: &HeatmapGrid, den_extra: &HeatmapGrid| {
            let mut g = HeatmapGrid::new();
            for r in 0..GRID_ROWS {
                for c in 0..GRID_COLS {
                    let n = num.get(r, c).unwrap_or(0.0);
                    let d = n + den_extra.get(r, c).unwrap_or(0.0);
                    if d > 0.0 {
                        g.set(r, c, Some(n / d));
                    }
                }
            }
            g
        };
        let precision = ratio(&tp_pred, &fp_pred);
        let recall = ratio(&tp_gt, &fn_gt);

        let mean_grid = |idx: usize| {
            let mut g = HeatmapGrid::new();
            for k in 0..GRID_ROWS * GRID_COLS {
                if counts[k] > 0 {
                    g.set(k / GRID_COLS, k % GRID_COLS, Some(sums[k][idx] / counts[k] as f64));
                }
            }
            g
        };

        // Track-id changes: walk each GT track's TP frames in order and
        // count every frame whose matched prediction id differs from the
        // previous one, binned at that frame's GT position.
        let mut id_changes = HeatmapGrid::zeros();
        let mut per_track: BTreeMap<u64, Vec<&MatchEvent>> = BTreeMap::new();
        for e in &self.events {
            per_track.entry(e.gt_id).or_default().push(e);
        }
        for events in per_track.values_mut() {
            events.sort_by_key(|e| e.frame_index);
            for w in events.windows(2) {
                if w[1].pred_id != w[0].pred_id {
                    if let Some((r, c)) = HeatmapGrid::cell_of(w[1].gt_pos[0], w[1].gt_pos[1]) {
                        id_changes.add(r, c, 1.0);
                    }
                }
            }
        }

        EvalReport {
            precision,
            recall,
            long_disp: mean_grid(0),
            lat_disp: mean_grid(1),
            len_err: mean_grid(2),
            wid_err: mean_grid(3),
            hei_err: mean_grid(4),
            id_changes,
            tp_pred_cells: tp_pred,
            fp_pred_cells: fp_pred,
            tp_gt_cells: tp_gt,
            fn_gt_cells: fn_gt,
            tp: self.events.len(),
            fp: self.false_positives.len(),
            fn_: self.false_negatives.len(),
        }
    }
}

impl EvalReport {
    pub fn overall_precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn overall_recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// Total id changes across all cells.
    pub fn total_id_changes(&self) -> f64 {
        let mut total = 0.0;
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                total += self.id_changes.get(r, c).unwrap_or(0.0);
            }
        }
        total
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "none".to_string(),
    }
}

/// Writes `<dir>/<name>.csv` (row-major, `none` for empty cells) and
/// `<dir>/<name>.pgm` (8-bit graymap, min maps to 0 and max to 255;
/// empty cells and degenerate ranges map to 0).
pub fn write_heatmap(grid: &HeatmapGrid, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{name}.csv"));
    let mut csv = String::new();
    for r in 0..GRID_ROWS {
        let row: Vec<String> = (0..GRID_COLS).map(|c| fmt_cell(grid.get(r, c))).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let present: Vec<f64> = (0..GRID_ROWS * GRID_COLS)
        .filter_map(|k| grid.get(k / GRID_COLS, k % GRID_COLS))
        .collect();
    let (lo, hi) = present
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale_ok = present.len() > 0 && hi > lo;
    let mut bytes = Vec::with_capacity(GRID_ROWS * GRID_COLS);
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            let b = match grid.get(r, c) {
                Some(v) if scale_ok => ((v - lo) / (hi - lo) * 255.0).round() as u8,
                _ => 0,
            };
            bytes.push(b);
        }
    }
    let pgm_path = dir.join(format!("{name}.pgm"));
    let mut f = fs::File::create(&pgm_path).map_err(|e| Error::io(&pgm_path, e))?;
    write!(f, "P5\n{GRID_COLS} {GRID_ROWS}\n255\n").map_err(|e| Error::io(&pgm_path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&pgm_path, e))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "none".to_string(),
    }
}

/// Writes all eight heatmaps plus `summary.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let grids: [(&str, &HeatmapGrid); 8] = [
        ("precision", &report.precision),
        ("recall", &report.recall),
        ("long_disp", &report.long_disp),
        ("lat_disp", &report.lat_disp),
        ("len_err", &report.len_err),
        ("wid_err", &report.wid_err),
        ("hei_err", &report.hei_err),
        ("id_changes", &report.id_changes),
    ];
    for (name, grid) in grids {
        write_heatmap(grid, dir, name)?;
    }
    let mean_long = mean_over(&report.long_disp, &report.tp_gt_cells);
    let mean_lat = mean_over(&report.lat_disp, &report.tp_gt_cells);
    let path = dir.join("summary.csv");
    let body = format!(
        "tp,fp,fn,precision,recall,mean_long_disp,mean_lat_disp\n{},{},{},{},{},{},{}\n",
        report.tp,
        report.fp,
        report.fn_,
        fmt_opt(report.overall_precision()),
        fmt_opt(report.overall_recall()),
        fmt_opt(mean_long),
        fmt_opt(mean_lat),
    );
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Count-weighted mean of a per-cell mean grid.
fn mean_over(means: &HeatmapGrid, counts: &HeatmapGrid) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            if let (Some(m), Some(n)) = (means.get(r, c), counts.get(r, c)) {
                num += m * n;
                den += n;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Evaluates `predictions` against the dataset's GT boxes, transforming
/// both into the ego frame at each frame's timestamp, and writes the
/// report into `out_dir`.
pub fn evaluate_sequence(dataset_root: &Path, predictions: &Path, out_dir: &Path) -> Result<EvalReport> {
    let manifest = load_manifest(&dataset_root.join("manifest.json"))?;
    let poses = load_poses(&dataset_root.join("poses.csv"))?;
    let gt = load_boxes(&dataset_root.join("gt").join("boxes.csv"))?;
    let pred = load_boxes(predictions)?;

    let mut gt_frames: BTreeMap<u32, Vec<Box3D>> = BTreeMap::new();
    for b in gt {
        gt_frames.entry(b.frame_index).or_default().push(b);
    }
    let mut pred_frames: BTreeMap<u32, Vec<Box3D>> = BTreeMap::new();
    for b in pred {
        pred_frames.entry(b.frame_index).or_default().push(b);
    }

    let mut acc = EvalAccumulator::new();
    let empty = Vec::new();
    for (k, &t) in manifest.frame_timestamps.iter().enumerate() {
        // Frames are 1-based across the dataset layout.
        let f = k as u32 + 1;
        let world_to_ego = interpolate_pose(&poses, t)?.inverse();
        let to_ego = |boxes: &[Box3D]| -> Vec<Box3D> {
            boxes
                .iter()
                .map(|b| {
                    let p = world_to_ego.apply(&b.center());
                    let mut out = b.clone();
                    out.x = p.x;
                    out.y = p.y;
                    out.z = p.z;
                    out
                })
                .collect()
        };
        let g = to_ego(gt_frames.get(&f).unwrap_or(&empty));
        let p = to_ego(pred_frames.get(&f).unwrap_or(&empty));
        acc.add_frame(&g, &p);
    }
    let report = acc.finalize();
    write_report(&report, out_dir)?;
    Ok(report)
}
