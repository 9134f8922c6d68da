//! Sparse space-time tracklet sampling and per-camera label assignment.
//!
//! Tracklets are only looked at on a sparse grid of instants
//! `S_i = start_offset + i * P`. At each instant, the tracklets active in a
//! camera are thinned so that the kept ones are at least `d_min` apart in the
//! scene, and each kept tracklet gets the next free label of that camera.
//! When every dwell is shorter than `P` and nobody re-enters a camera, each
//! person can be hit by at most one instant per camera, which keeps the
//! labels free of identity duplicates.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::world::{CameraId, GroundTruth, IdentityId, TrackletId, TrackletRecord, World};

mod io;
pub use io::{
    load_dataset, read_dataset_file, resolve_dataset, save_dataset, DatasetFile, DATASET_FORMAT_VERSION,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsttConfig {
    /// Gap P between sampling instants, seconds.
    pub temporal_gap: f64,
    /// Minimum scene distance between tracklets kept at one instant.
    #[serde(default)]
    pub spatial_min_dist: f64,
    /// Time of the first instant; defaults to the earliest tracklet start.
    #[serde(default)]
    pub start_offset: Option<f64>,
}

impl SsttConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temporal_gap > 0.0) {
            return Err(Error::Config("temporal_gap must be > 0".into()));
        }
        if !(self.spatial_min_dist >= 0.0) {
            return Err(Error::Config("spatial_min_dist must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelledTracklet {
    pub tracklet: TrackletRecord,
    pub camera_id: CameraId,
    /// 1-based, unique within the camera.
    pub label: u32,
}

/// Per-camera labelled tracklets. Label spaces of different cameras are
/// unrelated: label 3 in camera 1 and label 3 in camera 2 say nothing about
/// each other.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelledDataset {
    /// Index `t - 1` holds camera `t`, ordered by label.
    pub cameras: Vec<Vec<LabelledTracklet>>,
}

impl LabelledDataset {
    pub fn empty(num_cameras: usize) -> Self {
        LabelledDataset {
            cameras: vec![Vec::new(); num_cameras],
        }
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    /// `M_t`, the label count of camera `t`.
    pub fn label_count(&self, camera: CameraId) -> usize {
        self.cameras.get(camera.wrapping_sub(1)).map_or(0, Vec::len)
    }

    pub fn label_counts(&self) -> Vec<usize> {
        self.cameras.iter().map(Vec::len).collect()
    }

    pub fn camera(&self, camera: CameraId) -> Result<&[LabelledTracklet]> {
        camera
            .checked_sub(1)
            .and_then(|i| self.cameras.get(i))
            .map(Vec::as_slice)
            .ok_or(Error::UnknownCamera(camera))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelledTracklet> {
        self.cameras.iter().flatten()
    }

    pub fn contains(&self, tracklet_id: TrackletId) -> bool {
        self.iter().any(|l| l.tracklet.tracklet_id == tracklet_id)
    }

    /// Checks the label bijection and `M_t >= 1` for every camera.
    pub fn validate(&self) -> Result<()> {
        for (i, cam) in self.cameras.iter().enumerate() {
            let camera_id = i + 1;
            if cam.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "camera {camera_id} has no labelled tracklets"
                )));
            }
            let mut ids = BTreeSet::new();
            for (k, l) in cam.iter().enumerate() {
                if l.camera_id != camera_id || l.tracklet.camera_id != camera_id {
                    return Err(Error::InvalidInput(format!(
                        "tracklet {} filed under camera {camera_id}",
                        l.tracklet.tracklet_id
                    )));
                }
                if l.label as usize != k + 1 {
                    return Err(Error::InvalidInput(format!(
                        "camera {camera_id}: labels are not 1..M_t in order"
                    )));
                }
                if !ids.insert(l.tracklet.tracklet_id) {
                    return Err(Error::InvalidInput(format!(
                        "tracklet {} labelled twice",
                        l.tracklet.tracklet_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One sampling instant and, per camera, the indices of active tracklets.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingInstant {
    pub index: usize,
    pub time: f64,
    pub active: Vec<Vec<usize>>,
}

/// Active sets at `S_i = start_offset + i * P` for every `i` up to the last
/// tracklet end. Index `c` of `tracklets_by_camera` is camera `c + 1`.
pub fn temporal_sample(
    tracklets_by_camera: &[Vec<&TrackletRecord>],
    temporal_gap: f64,
    start_offset: f64,
) -> Vec<SamplingInstant> {
    let last_end = tracklets_by_camera
        .iter()
        .flatten()
        .map(|t| t.end_time)
        .fold(f64::NEG_INFINITY, f64::max);
    if !last_end.is_finite() || !(temporal_gap > 0.0) {
        return Vec::new();
    }
    let mut instants = Vec::new();
    let mut i = 0usize;
    loop {
        let time = start_offset + i as f64 * temporal_gap;
        if time > last_end {
            break;
        }
        let active = tracklets_by_camera
            .iter()
            .map(|cam| {
                cam.iter()
                    .enumerate()
                    .filter(|(_, t)| t.is_active_at(time))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        instants.push(SamplingInstant {
            index: i,
            time,
            active,
        });
        i += 1;
    }
    instants
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Retention priority: longer first, then earlier start, then lower id.
pub fn retention_order(a: &TrackletRecord, b: &TrackletRecord) -> std::cmp::Ordering {
    b.duration()
        .total_cmp(&a.duration())
        .then(a.start_time.total_cmp(&b.start_time))
        .then(a.tracklet_id.cmp(&b.tracklet_id))
}

/// Keep co-occurring tracklets that are pairwise at least `d_min` apart at
/// time `instant`, greedily in [`retention_order`]. With `d_min == 0` the
/// input is returned as is.
pub fn spatial_filter<'a>(
    cooccurring: &[&'a TrackletRecord],
    instant: f64,
    d_min: f64,
) -> Vec<&'a TrackletRecord> {
    if d_min <= 0.0 {
        return cooccurring.to_vec();
    }
    let mut order = cooccurring.to_vec();
    order.sort_by(|a, b| retention_order(a, b));
    let mut kept: Vec<(&TrackletRecord, [f64; 2])> = Vec::new();
    for t in order {
        let p = t.position_at(instant);
        if kept.iter().all(|(_, q)| distance(p, *q) >= d_min) {
            kept.push((t, p));
        }
    }
    kept.into_iter().map(|(t, _)| t).collect()
}

/// Give labels `1..M_t` per camera in the given order. A tracklet that shows
/// up more than once keeps the label of its first appearance.
pub fn assign_labels(sampled_per_camera: &[Vec<&TrackletRecord>]) -> LabelledDataset {
    let cameras = sampled_per_camera
        .iter()
        .enumerate()
        .map(|(i, sampled)| {
            let camera_id = i + 1;
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for t in sampled {
                if seen.insert(t.tracklet_id) {
                    out.push(LabelledTracklet {
                        tracklet: (*t).clone(),
                        camera_id,
                        label: out.len() as u32 + 1,
                    });
                }
            }
            out
        })
        .collect();
    LabelledDataset { cameras }
}

#[derive(Clone, Debug)]
pub struct SsttOutcome {
    pub dataset: LabelledDataset,
    pub num_instants: usize,
    pub start_offset: f64,
}

/// Full SSTT labelling over an explicit tracklet pool.
pub fn sstt_label_tracklets<'a>(
    tracklets: impl IntoIterator<Item = &'a TrackletRecord>,
    num_cameras: usize,
    config: &SsttConfig,
) -> Result<SsttOutcome> {
    config.validate()?;
    let mut by_camera: Vec<Vec<&TrackletRecord>> = vec![Vec::new(); num_cameras];
    for t in tracklets {
        by_camera
            .get_mut(t.camera_id.wrapping_sub(1))
            .ok_or(Error::UnknownCamera(t.camera_id))?
            .push(t);
    }
    let start_offset = config.start_offset.unwrap_or_else(|| {
        by_camera
            .iter()
            .flatten()
            .map(|t| t.start_time)
            .fold(f64::INFINITY, f64::min)
    });
    let instants = temporal_sample(&by_camera, config.temporal_gap, start_offset);
    let mut sampled: Vec<Vec<&TrackletRecord>> = vec![Vec::new(); num_cameras];
    for inst in &instants {
        for (c, active) in inst.active.iter().enumerate() {
            let co: Vec<&TrackletRecord> = active.iter().map(|&k| by_camera[c][k]).collect();
            sampled[c].extend(spatial_filter(&co, inst.time, config.spatial_min_dist));
        }
    }
    Ok(SsttOutcome {
        dataset: assign_labels(&sampled),
        num_instants: instants.len(),
        start_offset,
    })
}

/// SSTT labelling of a world's training tracklets.
pub fn sstt_label(world: &World, config: &SsttConfig) -> Result<SsttOutcome> {
    if config.temporal_gap <= world.config.mean_dwell {
        log::warn!(
            "temporal gap {} does not exceed the mean dwell {}; expect identity duplicates",
            config.temporal_gap,
            world.config.mean_dwell
        );
    }
    sstt_label_tracklets(world.train_tracklets(), world.config.num_cameras, config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuplicationReport {
    pub per_camera: Vec<f64>,
    pub overall: f64,
}

/// Fraction of identities per camera that hold two or more labels, and the
/// mean over cameras.
pub fn duplication_rate(
    dataset: &LabelledDataset,
    ground_truth: &GroundTruth,
) -> Result<DuplicationReport> {
    let mut per_camera = Vec::with_capacity(dataset.num_cameras());
    for cam in &dataset.cameras {
        let mut labels_per_id: BTreeMap<IdentityId, usize> = BTreeMap::new();
        for l in cam {
            let id = ground_truth
                .get(&l.tracklet.tracklet_id)
                .ok_or(Error::MissingGroundTruth(l.tracklet.tracklet_id))?;
            *labels_per_id.entry(*id).or_default() += 1;
        }
        let n = labels_per_id.len();
        let dup = labels_per_id.values().filter(|&&k| k >= 2).count();
        per_camera.push(if n == 0 { 0.0 } else { dup as f64 / n as f64 });
    }
    let overall = if per_camera.is_empty() {
        0.0
    } else {
        per_camera.iter().sum::<f64>() / per_camera.len() as f64
    };
    Ok(DuplicationReport {
        per_camera,
        overall,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    /// IDs selected for duplication per camera, `ceil(rate * ids)`.
    pub selected: Vec<usize>,
    /// Extra tracklets actually added per camera.
    pub added: Vec<usize>,
    /// Selected IDs without a spare tracklet.
    pub shortfall: Vec<usize>,
}

/// Give `ceil(rate * ids)` random identities per camera a second tracklet
/// with a fresh label, drawn from the `pool` tracklets that are not labelled
/// yet. Identities with no spare tracklet are counted as shortfall.
pub fn inject_duplication<'a>(
    dataset: &LabelledDataset,
    rate: f64,
    pool: impl IntoIterator<Item = &'a TrackletRecord>,
    seed: u64,
) -> Result<(LabelledDataset, InjectionReport)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("duplication rate {rate} not in [0, 1]")));
    }
    let mut spares: BTreeMap<(CameraId, IdentityId), Vec<&TrackletRecord>> = BTreeMap::new();
    for t in pool {
        if !dataset.contains(t.tracklet_id) {
            spares.entry((t.camera_id, t.identity_id)).or_default().push(t);
        }
    }
    let mut out = dataset.clone();
    let mut report = InjectionReport {
        selected: Vec::new(),
        added: Vec::new(),
        shortfall: Vec::new(),
    };
    for (i, cam) in out.cameras.iter_mut().enumerate() {
        let camera_id = i + 1;
        let mut rng = seed::Rng::seed_from_u64(seed::derive(seed, "duplication", camera_id as u64));
        let ids: Vec<IdentityId> = cam
            .iter()
            .map(|l| l.tracklet.identity_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let want = ((rate * ids.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut chosen = ids.clone();
        chosen.shuffle(&mut rng);
        chosen.truncate(want);
        chosen.sort_unstable();
        let mut added = 0;
        for id in &chosen {
            let Some(extra) = spares
                .get(&(camera_id, *id))
                .and_then(|v| v.choose(&mut rng))
            else {
                continue;
            };
            cam.push(LabelledTracklet {
                tracklet: (*extra).clone(),
                camera_id,
                label: cam.len() as u32 + 1,
            });
            added += 1;
        }
        report.selected.push(want);
        report.added.push(added);
        report.shortfall.push(want - added);
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests;
