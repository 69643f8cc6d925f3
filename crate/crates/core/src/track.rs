//! Track lifecycle over per-frame world-frame clusters.
//!
//! Association is greedy nearest-first under a speed-scaled gate. Matched
//! clusters are refined against the track's aggregated cloud with GICP
//! seeded by a constant-velocity prediction; the refined pose is adopted
//! only when it beats the raw world pose by a clear margin, so clusters
//! that already coincide (perfect poses, zero sensor noise) are merged
//! bit-exactly and the aggregate equals the plain union.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry;
use crate::ground::anomaly::RoadWorldModel;
use crate::register::{alignment_cost, gicp, voxel_downsample, GicpConfig};
use crate::transform::RigidTransform;

/// A refined pose must undercut the raw-pose cost by this factor.
pub const ALIGN_ACCEPT_FACTOR: f64 = 0.98;
/// Voxel edge for downsampling the aggregate before alignment.
pub const AGGREGATE_VOXEL: f64 = 0.05;
/// Refinements displacing no point farther than this are discarded: below
/// the aggregate's voxel quantization they only chase sampling noise, and
/// dropping them keeps already-coincident clusters bit-exact.
pub const MIN_ALIGN_CORRECTION: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct TrackerParams {
    /// Base association gate in meters; widened by ego speed times the
    /// time gap to the track's last observation.
    pub gate_base: f64,
    /// Consecutive unmatched frames beyond which a track terminates.
    pub max_miss: u32,
    /// Minimum observation count for unknown-class candidates.
    pub min_lifetime: usize,
    /// Maximum axis-aligned aggregate extent for unknown-class candidates.
    pub max_extent: f64,
    /// Road proximity radius for unknown-class candidates.
    pub road_radius: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            gate_base: 2.0,
            max_miss: 3,
            min_lifetime: 5,
            max_extent: 6.0,
            road_radius: 2.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_base > 0.0) {
            return Err(Error::validation("track.gate_base", "must be positive"));
        }
        if self.min_lifetime == 0 {
            return Err(Error::validation("track.min_lifetime", "must be >= 1"));
        }
        if !(self.max_extent > 0.0) {
            return Err(Error::validation("track.max_extent", "must be positive"));
        }
        if !(self.road_radius >= 0.0) {
            return Err(Error::validation("track.road_radius", "must be >= 0"));
        }
        Ok(())
    }
}

/// One cluster handed to the tracker, already motion-compensated into the
/// world frame.
#[derive(Debug, Clone)]
pub struct ClusterObservation {
    pub points: Vec<Vector3<f64>>,
    /// True when the cluster overlapped an obstacle-candidate mask region.
    pub mask_tagged: bool,
    /// Projection events per nonzero instance id.
    pub instance_votes: BTreeMap<u16, usize>,
    /// Total in-image projection events, the vote denominator.
    pub in_view: usize,
}

impl ClusterObservation {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        ClusterObservation {
            points,
            mask_tagged: false,
            instance_votes: BTreeMap::new(),
            in_view: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackObservation {
    pub frame_index: usize,
    pub time: f64,
    /// Cluster centroid at its raw world pose.
    pub raw_centroid: Vector3<f64>,
    /// Centroid after alignment into the aggregate (equals `raw_centroid`
    /// when the refined pose was declined).
    pub aligned_centroid: Vector3<f64>,
    pub n_points: usize,
    pub mask_tagged: bool,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<TrackObservation>,
    /// World-frame cloud accumulated across observations.
    pub aggregate: Vec<Vector3<f64>>,
    /// Projection events per instance id, summed over observations.
    pub class_votes: BTreeMap<u16, usize>,
    /// Total projection events, the vote denominator.
    pub vote_total: usize,
    /// Consecutive frames without a match.
    pub miss_count: u32,
    /// Observations merged raw because alignment failed outright.
    pub low_confidence: u32,
    pub terminated: bool,
}

impl Track {
    fn new(id: u64, frame_index: usize, time: f64, cluster: ClusterObservation) -> Self {
        let c = geometry::centroid(&cluster.points);
        let mut track = Track {
            id,
            observations: Vec::new(),
            aggregate: cluster.points.clone(),
            class_votes: BTreeMap::new(),
            vote_total: 0,
            miss_count: 0,
            low_confidence: 0,
            terminated: false,
        };
        track.push_observation(frame_index, time, c, c, cluster);
        track
    }

    fn push_observation(
        &mut self,
        frame_index: usize,
        time: f64,
        raw_centroid: Vector3<f64>,
        aligned_centroid: Vector3<f64>,
        cluster: ClusterObservation,
    ) {
        self.observations.push(TrackObservation {
            frame_index,
            time,
            raw_centroid,
            aligned_centroid,
            n_points: cluster.points.len(),
            mask_tagged: cluster.mask_tagged,
        });
        for (id, n) in cluster.instance_votes {
            *self.class_votes.entry(id).or_insert(0) += n;
        }
        self.vote_total += cluster.in_view;
        self.miss_count = 0;
    }

    /// Number of frames the track was actually observed in.
    pub fn lifetime(&self) -> usize {
        self.observations.len()
    }

    pub fn last(&self) -> &TrackObservation {
        self.observations.last().expect("tracks hold >= 1 observation")
    }

    /// Velocity from the last two raw centroids, zero with one observation.
    pub fn velocity_estimate(&self) -> Vector3<f64> {
        let n = self.observations.len();
        if n < 2 {
            return Vector3::zeros();
        }
        let a = &self.observations[n - 2];
        let b = &self.observations[n - 1];
        let dt = b.time - a.time;
        if dt <= 0.0 {
            return Vector3::zeros();
        }
        (b.raw_centroid - a.raw_centroid) / dt
    }

    /// Constant-velocity extrapolation of the raw centroid.
    pub fn predicted_centroid(&self, time: f64) -> Vector3<f64> {
        let last = self.last();
        last.raw_centroid + self.velocity_estimate() * (time - last.time)
    }

    /// Axis-aligned extents of the aggregated cloud.
    pub fn extent(&self) -> [f64; 3] {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.aggregate {
            for (k, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
    }

    /// Mean of the per-frame raw centroids.
    pub fn mean_centroid(&self) -> Vector3<f64> {
        self.observations
            .iter()
            .map(|o| o.raw_centroid)
            .sum::<Vector3<f64>>()
            / self.observations.len() as f64
    }

    /// True when any observation overlapped an obstacle-candidate mask.
    pub fn mask_tagged(&self) -> bool {
        self.observations.iter().any(|o| o.mask_tagged)
    }

    /// Winning instance id when it holds at least half of all projection
    /// events; ties resolve to the lowest id.
    pub fn classify(&self) -> Option<u16> {
        if self.vote_total == 0 {
            return None;
        }
        let mut best: Option<(u16, usize)> = None;
        for (&id, &n) in &self.class_votes {
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((id, n));
            }
        }
        best.and_then(|(id, n)| (2 * n >= self.vote_total).then_some(id))
    }
}

/// A track eligible for matching this frame.
#[derive(Debug, Clone, Copy)]
pub struct AssociationCandidate {
    pub track_id: u64,
    pub predicted: Vector3<f64>,
    pub gate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// (track slot, cluster index) pairs, ordered by track slot.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_clusters: Vec<usize>,
}

/// Greedy nearest-first one-to-one matching. Candidate pairs below the
/// per-track gate are taken in order of (distance, track id, cluster
/// index); each acceptance retires its track and cluster.
pub fn associate(tracks: &[AssociationCandidate], clusters: &[Vector3<f64>]) -> Association {
    let mut edges: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (ci, c) in clusters.iter().enumerate() {
            let d = (t.predicted - c).norm();
            if d < t.gate {
                edges.push((d, t.track_id, ci, ti));
            }
        }
    }
    edges.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut track_taken = vec![false; tracks.len()];
    let mut cluster_taken = vec![false; clusters.len()];
    let mut pairs = Vec::new();
    for (_, _, ci, ti) in edges {
        if !track_taken[ti] && !cluster_taken[ci] {
            track_taken[ti] = true;
            cluster_taken[ci] = true;
            pairs.push((ti, ci));
        }
    }
    pairs.sort_unstable();
    Association {
        pairs,
        unmatched_tracks: (0..tracks.len()).filter(|&i| !track_taken[i]).collect(),
        unmatched_clusters: (0..clusters.len()).filter(|&i| !cluster_taken[i]).collect(),
    }
}

pub struct Tracker {
    params: TrackerParams,
    gicp_config: GicpConfig,
    pub tracks: Vec<Track>,
    next_id: u64,
    last_time: Option<f64>,
}

impl Tracker {
    pub fn new(params: TrackerParams, gicp_config: GicpConfig) -> Result<Self> {
        params.validate()?;
        gicp_config.validate()?;
        Ok(Tracker {
            params,
            gicp_config,
            tracks: Vec::new(),
            next_id: 1,
            last_time: None,
        })
    }

    /// Ingests one frame of clusters. Returns the track id assigned to each
    /// cluster, in input order.
    pub fn step(
        &mut self,
        frame_index: usize,
        time: f64,
        ego_speed: f64,
        clusters: Vec<ClusterObservation>,
    ) -> Vec<u64> {
        debug_assert!(self.last_time.is_none_or(|t| time > t), "frames must advance in time");
        self.last_time = Some(time);

        let active: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| !self.tracks[i].terminated)
            .collect();
        let candidates: Vec<AssociationCandidate> = active
            .iter()
            .map(|&i| {
                let t = &self.tracks[i];
                let dt = (time - t.last().time).max(0.0);
                AssociationCandidate {
                    track_id: t.id,
                    predicted: t.predicted_centroid(time),
                    gate: self.params.gate_base + ego_speed.abs() * dt,
                }
            })
            .collect();
        let centroids: Vec<Vector3<f64>> = clusters
            .iter()
            .map(|c| geometry::centroid(&c.points))
            .collect();
        let assoc = associate(&candidates, &centroids);

        let mut assigned = vec![0u64; clusters.len()];
        let mut clusters: Vec<Option<ClusterObservation>> =
            clusters.into_iter().map(Some).collect();
        for &(slot, ci) in &assoc.pairs {
            let track = &mut self.tracks[active[slot]];
            let cluster = clusters[ci].take().expect("each cluster matched once");
            assigned[ci] = track.id;
            merge_observation(
                track,
                frame_index,
                time,
                centroids[ci],
                cluster,
                &self.gicp_config,
            );
        }
        for &slot in &assoc.unmatched_tracks {
            let track = &mut self.tracks[active[slot]];
            track.miss_count += 1;
            if track.miss_count > self.params.max_miss {
                track.terminated = true;
            }
        }
        for &ci in &assoc.unmatched_clusters {
            let cluster = clusters[ci].take().expect("unmatched cluster is untaken");
            let id = self.next_id;
            self.next_id += 1;
            assigned[ci] = id;
            self.tracks.push(Track::new(id, frame_index, time, cluster));
        }
        assigned
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Next id the tracker would assign; ids are never reused.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks
    }
}

/// Merges a matched cluster into the track.
///
/// The cluster is aligned to the (downsampled) aggregate with GICP seeded
/// by the constant-velocity prediction. The refined pose is adopted only
/// when GICP converged and its cost undercuts the raw-pose cost by
/// [`ALIGN_ACCEPT_FACTOR`]; otherwise the raw world points are merged, so
/// already-coincident clusters pass through untouched. Outright alignment
/// failures (too few points, no correspondences, divergence) also merge
/// raw and count as low-confidence.
fn merge_observation(
    track: &mut Track,
    frame_index: usize,
    time: f64,
    raw_centroid: Vector3<f64>,
    cluster: ClusterObservation,
    config: &GicpConfig,
) {
    let min_pts = config.k_neighbors + 1;
    let mut aligned_points: Option<(Vec<Vector3<f64>>, Vector3<f64>)> = None;
    let mut failed = false;

    if cluster.points.len() >= min_pts && track.aggregate.len() >= min_pts {
        let mut target = voxel_downsample(&track.aggregate, AGGREGATE_VOXEL);
        if target.len() < min_pts {
            target = track.aggregate.clone();
        }
        // Seed: carry the last alignment offset forward along the
        // predicted motion, mapping the new cluster onto the aggregate.
        let last = track.last();
        let expected = last.aligned_centroid
            + track.velocity_estimate() * (time - last.time);
        let init = RigidTransform {
            rotation: nalgebra::Matrix3::identity(),
            translation: expected - raw_centroid,
        };
        let shifted: Vec<Vector3<f64>> =
            cluster.points.iter().map(|p| init.apply(p)).collect();
        let raw_cost = alignment_cost(
            &cluster.points,
            &target,
            &RigidTransform::identity(),
            config,
        );
        match (gicp(&shifted, &target, config), raw_cost) {
            (Ok(res), Ok(raw_cost)) => {
                if res.converged
                    && res.final_cost.is_finite()
                    && res.final_cost < ALIGN_ACCEPT_FACTOR * raw_cost
                {
                    let total = res.transform.compose(&init);
                    let pts: Vec<Vector3<f64>> =
                        cluster.points.iter().map(|p| total.apply(p)).collect();
                    let moved = pts
                        .iter()
                        .zip(&cluster.points)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max);
                    if moved > MIN_ALIGN_CORRECTION {
                        let c = total.apply(&raw_centroid);
                        aligned_points = Some((pts, c));
                    }
                } else if !res.converged {
                    failed = true;
                }
            }
            _ => failed = true,
        }
    } else {
        failed = true;
    }

    if failed {
        track.low_confidence += 1;
    }
    let (points, aligned_centroid) = match aligned_points {
        Some((pts, c)) => (pts, c),
        None => (cluster.points.clone(), raw_centroid),
    };
    track.aggregate.extend_from_slice(&points);
    track.push_observation(frame_index, time, raw_centroid, aligned_centroid, cluster);
}

/// Indices of tracks surviving the candidate filter. Tracks with a
/// classified instance label pass unconditionally; unknown-class tracks
/// must live long enough, stay compact, and sit near the road.
pub fn filter_candidates(
    tracks: &[Track],
    road: &RoadWorldModel,
    params: &TrackerParams,
) -> Vec<usize> {
    let mut keep = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        if t.classify().is_some() {
            keep.push(i);
            continue;
        }
        if t.lifetime() < params.min_lifetime {
            continue;
        }
        if t.extent().iter().any(|&e| e > params.max_extent) {
            continue;
        }
        let c = t.mean_centroid();
        if !road.is_near_road(c.x, c.y, params.road_radius) {
            continue;
        }
        keep.push(i);
    }
    keep
}
