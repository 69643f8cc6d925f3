//! Sequence-level drivers behind the CLI subcommands: end-to-end detection,
//! the naive per-mask depth baseline, synthetic generation, and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{clusters_from_labels, dbscan};
use crate::config::PipelineConfig;
use crate::dataset::{save_boxes, Dataset, SequenceManifest};
use crate::error::{Error, Result};
use crate::eval::{evaluate_sequence, EvalReport};
use crate::fuse;
use crate::ground::anomaly::RoadWorldModel;
use crate::ground::segment_ground;
use crate::maskproc::{extract_candidates, naive_depth};
use crate::synthgen::{self, SceneSpec};
use crate::track::{filter_candidates, ClusterObservation, Tracker};
use crate::transform::{interpolate_pose, motion_compensate};

/// Counter and wall-clock total for one pipeline stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageStats {
    pub stage: String,
    /// Stage-specific tally; see the field docs on [`DetectReport`].
    pub count: u64,
    pub millis: u64,
}

/// Run report written next to the predictions. Timings vary run to run;
/// everything else is deterministic for a fixed dataset and config.
#[derive(Debug, Clone, Serialize)]
pub struct DetectReport {
    pub sequence_id: String,
    pub n_frames: u32,
    /// Stage order and counts: load = points read, ground = ground points,
    /// cluster = clusters over all frames, maskproc = clusters tagged by a
    /// candidate region, track = track ids created, anomaly = road-surface
    /// anomaly clusters, resolve = entities after merging, emit = box rows.
    pub stages: Vec<StageStats>,
}

impl DetectReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Default)]
struct StageClock {
    millis: BTreeMap<&'static str, u128>,
}

impl StageClock {
    fn add(&mut self, stage: &'static str, since: Instant) {
        *self.millis.entry(stage).or_insert(0) += since.elapsed().as_millis();
    }

    fn get(&self, stage: &'static str) -> u64 {
        *self.millis.get(stage).unwrap_or(&0) as u64
    }
}

/// Runs detection over a recorded sequence and writes
/// `predictions/boxes.csv` plus `report.json` under `out_dir`.
///
/// Stage order per frame: motion compensation to the world frame, ground
/// segmentation (accumulating the road surface model), clustering of
/// nonground points, camera projection for instance votes and candidate-mask
/// tagging, then the tracker step. After the last frame: candidate
/// filtering, road-surface anomaly detection, entity resolution, and box
/// emission.
pub fn run_detect(dataset_root: &Path, config: &PipelineConfig, out_dir: &Path) -> Result<DetectReport> {
    config.validate()?;
    let mut clock = StageClock::default();

    let t0 = Instant::now();
    let ds = Dataset::load(dataset_root)?;
    clock.add("load", t0);
    let points_total: u64 = ds.clouds.iter().map(|c| c.points.len() as u64).sum();

    let n = ds.manifest.n_frames as usize;
    let ground_params = config.ground_params();
    let dbscan_params = config.dbscan_params();

    // Ego translation per frame, for the speed-widened association gate.
    let mut ego_at = Vec::with_capacity(n);
    for k in 0..n {
        let t = ds.frame_time(k as u32 + 1);
        ego_at.push((t, interpolate_pose(&ds.poses, t)?.translation));
    }
    let ego_speed = |k: usize| -> f64 {
        if n < 2 {
            return 0.0;
        }
        let (i, j) = if k == 0 { (0, 1) } else { (k - 1, k) };
        let dt = ego_at[j].0 - ego_at[i].0;
        if dt > 0.0 {
            (ego_at[j].1 - ego_at[i].1).norm() / dt
        } else {
            0.0
        }
    };

    let mut road_model = RoadWorldModel::new(config.anomaly.cell_m);
    let mut tracker = Tracker::new(config.tracker_params(), config.gicp_config())?;
    let mut ground_total = 0u64;
    let mut cluster_total = 0u64;
    let mut tagged_total = 0u64;

    for k in 0..n {
        let frame = k as u32 + 1;
        let t_frame = ds.frame_time(frame);

        // Compensated points in the world frame.
        let t0 = Instant::now();
        let ego_cloud = motion_compensate(&ds.clouds[k], &ds.poses, &ds.lidar_extrinsic, t_frame)
            .map_err(|e| e.in_stage("compensate", frame))?;
        let pose = interpolate_pose(&ds.poses, t_frame).map_err(|e| e.in_stage("compensate", frame))?;
        let world: Vec<Vector3<f64>> = ego_cloud.points.iter().map(|p| pose.apply(&p.xyz())).collect();
        clock.add("compensate", t0);

        let t0 = Instant::now();
        let seg = segment_ground(&world, &ground_params).map_err(|e| e.in_stage("ground", frame))?;
        let mut nonground = Vec::new();
        for (i, p) in world.iter().enumerate() {
            if seg.is_ground[i] {
                road_model.insert(*p);
                ground_total += 1;
            } else {
                nonground.push(*p);
            }
        }
        clock.add("ground", t0);

        let t0 = Instant::now();
        let labels = dbscan(&nonground, &dbscan_params).map_err(|e| e.in_stage("cluster", frame))?;
        let clusters = clusters_from_labels(&labels);
        cluster_total += clusters.len() as u64;
        let cluster_pts: Vec<Vec<Vector3<f64>>> = clusters
            .iter()
            .map(|ix| ix.iter().map(|&i| nonground[i]).collect())
            .collect();
        clock.add("cluster", t0);

        // Project every cluster into every camera at its own shutter time:
        // instance-mask hits vote for a class, candidate-region overlap tags
        // the cluster as mask-confirmed.
        let t0 = Instant::now();
        let mut tagged = vec![false; cluster_pts.len()];
        let mut votes: Vec<BTreeMap<u16, usize>> = vec![BTreeMap::new(); cluster_pts.len()];
        let mut in_view = vec![0usize; cluster_pts.len()];
        for cam_frame in ds.camera_frames(frame) {
            let cam = ds
                .cameras
                .iter()
                .find(|c| c.camera_id == cam_frame.camera_id)
                .ok_or_else(|| {
                    Error::Internal(format!("camera {} missing from calibration", cam_frame.camera_id))
                })?;
            let masks = ds.masks.get(cam.camera_id, frame).ok_or_else(|| {
                Error::validation(
                    "masks",
                    format!("camera {} frame {frame} has no masks", cam.camera_id),
                )
                .in_stage("maskproc", frame)
            })?;
            let world_to_ego = interpolate_pose(&ds.poses, cam_frame.timestamp)
                .map_err(|e| e.in_stage("maskproc", frame))?
                .inverse();

            let mut pixel_lists = Vec::with_capacity(cluster_pts.len());
            for (ci, pts) in cluster_pts.iter().enumerate() {
                let ego_pts: Vec<Vector3<f64>> = pts.iter().map(|p| world_to_ego.apply(p)).collect();
                let projs = cam.project_points(&ego_pts);
                in_view[ci] += projs.len();
                let mut pixels = Vec::with_capacity(projs.len());
                for pr in &projs {
                    let (u, v) = pr.pixel();
                    let inst = masks.instance.at(u, v);
                    if inst != 0 {
                        *votes[ci].entry(inst).or_insert(0) += 1;
                    }
                    pixels.push((u, v));
                }
                pixel_lists.push(pixels);
            }

            let params = config.maskproc_params_for(cam.width, cam.height);
            let regions = extract_candidates(&masks.road, &params).map_err(|e| e.in_stage("maskproc", frame))?;
            for (ci, hit) in fuse::mask_to_clusters(&regions, &pixel_lists, config.fuse.overlap_frac)
                .into_iter()
                .enumerate()
            {
                tagged[ci] |= hit;
            }
        }
        tagged_total += tagged.iter().filter(|&&t| t).count() as u64;
        clock.add("maskproc", t0);

        let t0 = Instant::now();
        let observations: Vec<ClusterObservation> = cluster_pts
            .into_iter()
            .zip(tagged)
            .zip(votes)
            .zip(&in_view)
            .map(|(((points, mask_tagged), instance_votes), &in_view)| ClusterObservation {
                points,
                mask_tagged,
                instance_votes,
                in_view,
            })
            .collect();
        tracker.step(frame as usize, t_frame, ego_speed(k), observations);
        clock.add("track", t0);
    }

    // Finish tracking: prune unknown-class candidates that are short-lived,
    // oversized, or off-road, then attach class labels.
    let t0 = Instant::now();
    let mut next_id = tracker.next_id();
    let tracks_created = next_id - 1;
    let params = tracker.params().clone();
    let all_tracks = tracker.into_tracks();
    let keep: BTreeSet<usize> = filter_candidates(&all_tracks, &road_model, &params).into_iter().collect();
    let kept: Vec<_> = all_tracks
        .into_iter()
        .enumerate()
        .filter_map(|(i, t)| keep.contains(&i).then_some(t))
        .collect();
    let mut fused = fuse::from_tracker_tracks(kept, &ds.masks.instance_classes);
    clock.add("track", t0);

    // Road-surface anomalies over the accumulated world model join as
    // stationary detections spanning the whole sequence.
    let t0 = Instant::now();
    let anomalies = road_model
        .detect_anomalies(&config.anomaly_params())
        .map_err(|e| e.in_stage("anomaly", ds.manifest.n_frames))?;
    let frame_list: Vec<(usize, f64)> = (1..=n).map(|f| (f, ds.frame_time(f as u32))).collect();
    fused.extend(fuse::anomaly_tracks(&anomalies, &frame_list, &mut next_id));
    clock.add("anomaly", t0);

    let t0 = Instant::now();
    let resolved = fuse::resolve_entities(fused, config.fuse.merge_dist_m);
    let entities = resolved.len() as u64;
    clock.add("resolve", t0);

    let t0 = Instant::now();
    let boxes = fuse::emit_boxes(&resolved);
    let pred_dir = out_dir.join("predictions");
    std::fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    save_boxes(&pred_dir.join("boxes.csv"), &boxes)?;
    clock.add("emit", t0);

    let stages = [
        ("load", points_total),
        ("compensate", points_total),
        ("ground", ground_total),
        ("cluster", cluster_total),
        ("maskproc", tagged_total),
        ("track", tracks_created),
        ("anomaly", anomalies.len() as u64),
        ("resolve", entities),
        ("emit", boxes.len() as u64),
    ]
    .into_iter()
    .map(|(stage, count)| StageStats {
        stage: stage.to_string(),
        count,
        millis: clock.get(stage),
    })
    .collect();
    let report = DetectReport {
        sequence_id: ds.manifest.sequence_id.clone(),
        n_frames: ds.manifest.n_frames,
        stages,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}

/// Per-candidate mean projected LiDAR depth, one CSV row per candidate
/// region. Writes `baseline.csv` under `out_dir` with header
/// `frame_index,camera_id,candidate_idx,depth,support`; depth is `none`
/// when no point projects into the region.
pub fn run_baseline(dataset_root: &Path, config: &PipelineConfig, out_dir: &Path) -> Result<usize> {
    config.validate()?;
    let ds = Dataset::load(dataset_root)?;
    let n = ds.manifest.n_frames as usize;

    // Frames are independent; chunks come back in frame order.
    let chunks: Vec<Result<(String, usize)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let frame = k as u32 + 1;
            let mut rows = String::new();
            let mut count = 0usize;
            for cam_frame in ds.camera_frames(frame) {
                let cam = ds
                    .cameras
                    .iter()
                    .find(|c| c.camera_id == cam_frame.camera_id)
                    .ok_or_else(|| {
                        Error::Internal(format!("camera {} missing from calibration", cam_frame.camera_id))
                    })?;
                let masks = ds.masks.get(cam.camera_id, frame).ok_or_else(|| {
                    Error::validation(
                        "masks",
                        format!("camera {} frame {frame} has no masks", cam.camera_id),
                    )
                    .in_stage("baseline", frame)
                })?;
                let params = config.maskproc_params_for(cam.width, cam.height);
                let regions =
                    extract_candidates(&masks.road, &params).map_err(|e| e.in_stage("baseline", frame))?;

                // Points as seen at the camera's shutter time.
                let ego_cloud =
                    motion_compensate(&ds.clouds[k], &ds.poses, &ds.lidar_extrinsic, cam_frame.timestamp)
                        .map_err(|e| e.in_stage("baseline", frame))?;
                let pts: Vec<Vector3<f64>> = ego_cloud.points.iter().map(|p| p.xyz()).collect();
                let projected: Vec<(usize, u32, u32, f64)> = cam
                    .project_points(&pts)
                    .iter()
                    .map(|pr| {
                        let (u, v) = pr.pixel();
                        (pr.point_index, u, v, pr.depth)
                    })
                    .collect();

                for (ci, cand) in regions.candidates.iter().enumerate() {
                    match naive_depth(cand, &projected) {
                        Some((depth, support)) => {
                            writeln!(rows, "{frame},{},{ci},{depth:.6},{support}", cam.camera_id)
                        }
                        None => writeln!(rows, "{frame},{},{ci},none,0", cam.camera_id),
                    }
                    .expect("string write");
                    count += 1;
                }
            }
            Ok((rows, count))
        })
        .collect();

    let mut csv = String::from("frame_index,camera_id,candidate_idx,depth,support\n");
    let mut total = 0usize;
    for chunk in chunks {
        let (rows, count) = chunk?;
        csv.push_str(&rows);
        total += count;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("baseline.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(total)
}

/// Generates a synthetic sequence from a scene description file.
pub fn run_synth(spec_path: &Path, out_dir: &Path) -> Result<SequenceManifest> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SceneSpec =
        serde_json::from_str(&text).map_err(|e| Error::parse(spec_path, None, e.to_string()))?;
    synthgen::generate(&spec, out_dir)
}

/// Evaluates `predictions/boxes.csv` under `out_dir` (falling back to the
/// dataset root when absent there) against the dataset ground truth and
/// writes the heatmaps into `out_dir/eval`.
pub fn run_eval(dataset_root: &Path, out_dir: &Path) -> Result<EvalReport> {
    let mut predictions = out_dir.join("predictions").join("boxes.csv");
    if !predictions.is_file() {
        predictions = dataset_root.join("predictions").join("boxes.csv");
    }
    evaluate_sequence(dataset_root, &predictions, &out_dir.join("eval"))
}
