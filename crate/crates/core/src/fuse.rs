//! Entity resolution across detection sources and final box emission.
//!
//! Tracks arrive from three paths: instance-classified clusters, clusters
//! tagged by obstacle-candidate mask regions, and road-model anomalies.
//! Duplicates are merged by source priority, each surviving track gets one
//! amodal cuboid fit on its full aggregate, and boxes are re-posed per
//! frame from the raw centroids.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::geometry;
use crate::ground::anomaly::AnomalyCluster;
use crate::kinematics;
use crate::maskproc::RoadRegions;
use crate::track::{Track, TrackObservation};
use crate::types::Box3D;

/// Detection provenance. Ordered ascending by priority so `max` picks the
/// strongest source; exactly one per track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DetectionSourceTag {
    Anomaly,
    ObstacleMask,
    Instance,
}

/// A track annotated with provenance and class label. `class_label` is
/// "unknown" until an instance vote resolves it; emission maps "unknown"
/// to "obstacle".
#[derive(Debug, Clone)]
pub struct FusedTrack {
    pub track: Track,
    pub source: DetectionSourceTag,
    pub class_label: String,
}

/// Wraps tracker output, resolving each track's source and class from its
/// instance-mask votes. `classes` maps instance ids to class names.
pub fn from_tracker_tracks(
    tracks: Vec<Track>,
    classes: &BTreeMap<u16, String>,
) -> Vec<FusedTrack> {
    tracks
        .into_iter()
        .map(|track| {
            let voted = track.classify().and_then(|id| classes.get(&id));
            match voted {
                Some(name) => FusedTrack {
                    source: DetectionSourceTag::Instance,
                    class_label: name.clone(),
                    track,
                },
                None => FusedTrack {
                    source: DetectionSourceTag::ObstacleMask,
                    class_label: "unknown".into(),
                    track,
                },
            }
        })
        .collect()
}

/// Stationary tracks from road-surface anomaly clusters, one observation
/// per sequence frame. `frames` lists (frame_index, timestamp) for the
/// whole sequence; ids are drawn from `next_id`.
pub fn anomaly_tracks(
    clusters: &[AnomalyCluster],
    frames: &[(usize, f64)],
    next_id: &mut u64,
) -> Vec<FusedTrack> {
    clusters
        .iter()
        .map(|cluster| {
            let id = *next_id;
            *next_id += 1;
            let observations = frames
                .iter()
                .map(|&(frame_index, time)| TrackObservation {
                    frame_index,
                    time,
                    raw_centroid: cluster.centroid,
                    aligned_centroid: cluster.centroid,
                    n_points: cluster.points.len(),
                    mask_tagged: false,
                })
                .collect();
            FusedTrack {
                track: Track {
                    id,
                    observations,
                    aggregate: cluster.points.clone(),
                    class_votes: BTreeMap::new(),
                    vote_total: 0,
                    miss_count: 0,
                    low_confidence: 0,
                    terminated: true,
                },
                source: DetectionSourceTag::Anomaly,
                class_label: "obstacle".into(),
            }
        })
        .collect()
}

/// Marks clusters whose projection concentrates in one obstacle-candidate
/// region. `projections[k]` holds cluster k's in-view pixel hits for the
/// camera frame `regions` was extracted from; a cluster is tagged when at
/// least `overlap_frac` of them land in a single candidate region.
pub fn mask_to_clusters(
    regions: &RoadRegions,
    projections: &[Vec<(u32, u32)>],
    overlap_frac: f64,
) -> Vec<bool> {
    projections
        .iter()
        .map(|pixels| {
            if pixels.is_empty() {
                return false;
            }
            let mut per_region: BTreeMap<usize, usize> = BTreeMap::new();
            for &(x, y) in pixels {
                if let Some(r) = regions.candidate_at(x, y) {
                    *per_region.entry(r).or_insert(0) += 1;
                }
            }
            let best = per_region.values().copied().max().unwrap_or(0);
            best as f64 >= overlap_frac * pixels.len() as f64
        })
        .collect()
}

fn frame_centroids(t: &Track) -> BTreeMap<usize, Vector3<f64>> {
    t.observations
        .iter()
        .map(|o| (o.frame_index, o.raw_centroid))
        .collect()
}

/// True when the tracks share at least one frame and their raw centroids
/// stay within `merge_dist` on every common frame.
fn duplicates(a: &Track, b: &Track, merge_dist: f64) -> bool {
    let ca = frame_centroids(a);
    let cb = frame_centroids(b);
    let mut common = 0usize;
    for (f, pa) in &ca {
        if let Some(pb) = cb.get(f) {
            if (pa - pb).norm() >= merge_dist {
                return false;
            }
            common += 1;
        }
    }
    common > 0
}

/// Merges `group` (indices into `tracks`, all duplicates of one entity)
/// into a single track: lowest id, class and source from the
/// highest-priority member, clouds unioned, one observation per frame
/// taken from the strongest member observing it.
fn merge_group(tracks: &[FusedTrack], group: &[usize]) -> FusedTrack {
    // Strongest first: priority desc, then id asc.
    let mut order: Vec<usize> = group.to_vec();
    order.sort_by(|&i, &j| {
        tracks[j]
            .source
            .cmp(&tracks[i].source)
            .then(tracks[i].track.id.cmp(&tracks[j].track.id))
    });
    let lead = &tracks[order[0]];
    let id = group.iter().map(|&i| tracks[i].track.id).min().unwrap();

    let mut by_frame: BTreeMap<usize, TrackObservation> = BTreeMap::new();
    let mut aggregate = Vec::new();
    let mut class_votes: BTreeMap<u16, usize> = BTreeMap::new();
    let mut vote_total = 0;
    let mut low_confidence = 0;
    for &i in &order {
        let t = &tracks[i].track;
        for o in &t.observations {
            by_frame.entry(o.frame_index).or_insert_with(|| o.clone());
        }
        aggregate.extend_from_slice(&t.aggregate);
        for (&cid, &n) in &t.class_votes {
            *class_votes.entry(cid).or_insert(0) += n;
        }
        vote_total += t.vote_total;
        low_confidence += t.low_confidence;
    }
    FusedTrack {
        track: Track {
            id,
            observations: by_frame.into_values().collect(),
            aggregate,
            class_votes,
            vote_total,
            miss_count: 0,
            low_confidence,
            terminated: true,
        },
        source: lead.source,
        class_label: lead.class_label.clone(),
    }
}

/// Entity resolution: repeatedly merges track groups that shadow each
/// other (all common-frame centroid distances < `merge_dist`) until a
/// fixpoint, so the result is idempotent. Output ordered by id.
pub fn resolve_entities(mut tracks: Vec<FusedTrack>, merge_dist: f64) -> Vec<FusedTrack> {
    loop {
        let n = tracks.len();
        // Union-find over the pairwise duplicate relation.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut merged_any = false;
        for i in 0..n {
            for j in (i + 1)..n {
                if duplicates(&tracks[i].track, &tracks[j].track, merge_dist) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj.max(ri)] = rj.min(ri);
                        merged_any = true;
                    }
                }
            }
        }
        if !merged_any {
            tracks.sort_by_key(|t| t.track.id);
            return tracks;
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        tracks = groups
            .values()
            .map(|group| {
                if group.len() == 1 {
                    tracks[group[0]].clone()
                } else {
                    merge_group(&tracks, group)
                }
            })
            .collect();
    }
}

/// One amodal Box3D per track per observed frame.
///
/// The cuboid is fit once on the final aggregate and re-posed per frame by
/// the raw centroid (offset between the raw and aligned centroid undoes
/// the alignment shift, so boxes follow the object's true motion while
/// keeping the aggregate's extent). Anomaly tracks are stationary by
/// construction and emit v = a = 0. "unknown" maps to class "obstacle".
/// Output sorted by (frame_index, id).
pub fn emit_boxes(tracks: &[FusedTrack]) -> Vec<Box3D> {
    let mut out = Vec::new();
    for ft in tracks {
        let t = &ft.track;
        let Some(fit) = geometry::fit_cuboid(&t.aggregate) else {
            continue;
        };
        let class = if ft.class_label == "unknown" {
            "obstacle".to_string()
        } else {
            ft.class_label.clone()
        };
        let mut obs: Vec<&TrackObservation> = t.observations.iter().collect();
        obs.sort_by_key(|o| o.frame_index);
        let centers: Vec<Vector3<f64>> = obs
            .iter()
            .map(|o| fit.center + (o.raw_centroid - o.aligned_centroid))
            .collect();
        let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
        let bev: Vec<[f64; 2]> = centers.iter().map(|c| [c.x, c.y]).collect();
        let (vs, accs) = if ft.source == DetectionSourceTag::Anomaly {
            (vec![[0.0; 2]; obs.len()], vec![[0.0; 2]; obs.len()])
        } else {
            (
                kinematics::velocities(&times, &bev),
                kinematics::accelerations(&times, &bev),
            )
        };
        for (k, o) in obs.iter().enumerate() {
            out.push(Box3D {
                frame_index: o.frame_index as u32,
                id: t.id,
                class: class.clone(),
                x: centers[k].x,
                y: centers[k].y,
                z: centers[k].z,
                w: fit.w,
                h: fit.h,
                l: fit.l,
                theta: fit.theta,
                v: vs[k],
                a: accs[k],
            });
        }
    }
    out.sort_by(|a, b| (a.frame_index, a.id).cmp(&(b.frame_index, b.id)));
    out
}
