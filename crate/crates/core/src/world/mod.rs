//! Synthetic multi-camera world.
//!
//! People arrive in each camera view as a Poisson process, stay for a
//! truncated-normal dwell time and walk a straight line across the scene.
//! Each visit (a [`Trajectory`]) is cut into tracklets by simulated tracking
//! failures, and every frame is observed through a per-camera linear-Gaussian
//! appearance model `x = A_c a + b_c + noise`.
//!
//! Fragment count per trajectory is `1 + Poisson(frag_rate - 1)`, capped by
//! the number of frames; cuts fall between consecutive frames chosen
//! uniformly, so fragments of one trajectory never overlap in time.

mod io;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::IndexedRandom;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use io::{load_world, save_world, WORLD_FORMAT_VERSION};

/// 1-based camera index.
pub type CameraId = usize;
pub type IdentityId = u32;
pub type TrackletId = u64;

fn default_frame_rate() -> f64 {
    2.0
}

fn default_min_cameras() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub num_cameras: usize,
    /// Total identities, training and test.
    pub num_identities: usize,
    /// The last `num_test_identities` identities are held out for evaluation.
    #[serde(default)]
    pub num_test_identities: usize,
    pub appearance_dim: usize,
    pub frame_dim: usize,
    /// Mean dwell time Q in seconds.
    pub mean_dwell: f64,
    /// Std of the dwell distribution before truncation; defaults to `0.25 * mean_dwell`.
    #[serde(default)]
    pub dwell_std: Option<f64>,
    pub sim_duration: f64,
    /// Poisson arrival rate per camera, arrivals per second.
    pub arrival_rate: f64,
    /// Expected fragments per trajectory.
    pub frag_rate: f64,
    pub noise_sigma: f64,
    pub scene_extent: [f64; 2],
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Weight of the camera-specific part of each camera's transform.
    #[serde(default)]
    pub camera_shift: f64,
    /// Expected norm of each camera's additive offset.
    #[serde(default)]
    pub offset_scale: f64,
    /// Allow an identity to visit the same camera more than once.
    #[serde(default)]
    pub reappearance: bool,
    /// With re-appearance enabled, chance that an arrival is a returning identity.
    #[serde(default)]
    pub reappear_prob: f64,
    /// Identities seen in fewer cameras after the Poisson phase get extra visits.
    #[serde(default = "default_min_cameras")]
    pub min_cameras_per_identity: usize,
    pub seed: u64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_cameras < 2 {
            return bad("num_cameras must be >= 2");
        }
        if self.num_identities < 2 {
            return bad("num_identities must be >= 2");
        }
        if self.num_test_identities >= self.num_identities {
            return bad("num_test_identities must leave at least one training identity");
        }
        if self.appearance_dim == 0 || self.frame_dim < self.appearance_dim {
            return bad("need 0 < appearance_dim <= frame_dim");
        }
        if !(self.mean_dwell > 0.0) {
            return bad("mean_dwell must be > 0");
        }
        if self.dwell_std.is_some_and(|s| !(s >= 0.0)) {
            return bad("dwell_std must be >= 0");
        }
        if !(self.sim_duration > 0.0) || !(self.arrival_rate >= 0.0) {
            return bad("sim_duration must be > 0 and arrival_rate >= 0");
        }
        if !(self.frag_rate >= 1.0) {
            return bad("frag_rate must be >= 1");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.scene_extent[0] > 0.0 && self.scene_extent[1] > 0.0) {
            return bad("scene_extent must be positive");
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be > 0");
        }
        if !(self.camera_shift >= 0.0 && self.offset_scale >= 0.0) {
            return bad("camera_shift and offset_scale must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.reappear_prob) {
            return bad("reappear_prob must be in [0, 1]");
        }
        if self.min_cameras_per_identity > self.num_cameras {
            return bad("min_cameras_per_identity exceeds num_cameras");
        }
        Ok(())
    }

    pub fn dwell_std(&self) -> f64 {
        self.dwell_std.unwrap_or(0.25 * self.mean_dwell)
    }

    /// Half-width of the symmetric truncation window around `mean_dwell`.
    /// Symmetric truncation keeps the mean at exactly Q; every dwell lies
    /// strictly inside `(0, 2Q)`.
    pub fn dwell_halfwidth(&self) -> f64 {
        (3.0 * self.dwell_std()).min(0.95 * self.mean_dwell)
    }

    pub fn max_dwell(&self) -> f64 {
        self.mean_dwell + self.dwell_halfwidth()
    }

    pub fn num_train_identities(&self) -> usize {
        self.num_identities - self.num_test_identities
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub id: IdentityId,
    /// Unit-norm latent appearance; hidden from the learner.
    pub appearance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub camera_id: CameraId,
    /// `frame_dim x appearance_dim`, full column rank.
    pub transform: Array2<f64>,
    pub offset: Array1<f64>,
}

impl CameraModel {
    /// Noise-free observation of an appearance vector.
    pub fn project(&self, appearance: ArrayView1<'_, f64>) -> Array1<f64> {
        self.transform.dot(&appearance) + &self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub pos: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: u64,
    pub identity_id: IdentityId,
    pub camera_id: CameraId,
    pub entry_time: f64,
    pub dwell: f64,
    /// One point per frame, sampled at the world frame rate.
    pub path: Vec<PathPoint>,
}

impl Trajectory {
    pub fn exit_time(&self) -> f64 {
        self.entry_time + self.dwell
    }
}

/// Time span of one tracklet cut from a trajectory, before frames are rendered.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackletSpan {
    pub trajectory_id: u64,
    pub identity_id: IdentityId,
    pub camera_id: CameraId,
    pub start_time: f64,
    pub end_time: f64,
    pub path: Vec<PathPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackletRecord {
    pub tracklet_id: TrackletId,
    pub trajectory_id: u64,
    pub camera_id: CameraId,
    /// Ground truth; evaluation only.
    pub identity_id: IdentityId,
    pub start_time: f64,
    pub end_time: f64,
    pub frame_times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    /// `num_frames x frame_dim`.
    pub frames: Array2<f64>,
}

impl TrackletRecord {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        self.start_time <= t && t <= self.end_time
    }

    /// Position at time `t`, linearly interpolated between frames and clamped
    /// to the tracklet span.
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let times = &self.frame_times;
        if t <= times[0] {
            return self.positions[0];
        }
        let last = times.len() - 1;
        if t >= times[last] {
            return self.positions[last];
        }
        let hi = times.partition_point(|&ft| ft <= t);
        let lo = hi - 1;
        let w = (t - times[lo]) / (times[hi] - times[lo]);
        let (a, b) = (self.positions[lo], self.positions[hi]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub identities: Vec<Identity>,
    pub cameras: Vec<CameraModel>,
    pub trajectories: Vec<Trajectory>,
    pub tracklets: Vec<TrackletRecord>,
}

/// Tracklet id to identity map, the only place identities leak from.
pub type GroundTruth = BTreeMap<TrackletId, IdentityId>;

impl World {
    pub fn camera(&self, camera_id: CameraId) -> Result<&CameraModel> {
        camera_id
            .checked_sub(1)
            .and_then(|i| self.cameras.get(i))
            .ok_or(Error::UnknownCamera(camera_id))
    }

    pub fn is_test_identity(&self, id: IdentityId) -> bool {
        (id as usize) >= self.config.num_train_identities()
    }

    pub fn train_tracklets(&self) -> impl Iterator<Item = &TrackletRecord> {
        self.tracklets
            .iter()
            .filter(|t| !self.is_test_identity(t.identity_id))
    }

    pub fn test_tracklets(&self) -> impl Iterator<Item = &TrackletRecord> {
        self.tracklets
            .iter()
            .filter(|t| self.is_test_identity(t.identity_id))
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.tracklets
            .iter()
            .map(|t| (t.tracklet_id, t.identity_id))
            .collect()
    }

    /// Smallest noise-free distance between two different identities seen
    /// by the same camera.
    pub fn separation_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for cam in &self.cameras {
            let clean: Vec<Array1<f64>> = self
                .identities
                .iter()
                .map(|id| cam.project(ArrayView1::from(&id.appearance)))
                .collect();
            for i in 0..clean.len() {
                for j in i + 1..clean.len() {
                    let d = (&clean[i] - &clean[j]).mapv(|v| v * v).sum().sqrt();
                    margin = margin.min(d);
                }
            }
        }
        margin
    }

    /// Noise level below which frames of one identity in one camera are, with
    /// overwhelming probability, closer to each other than to any other
    /// identity's frames in that camera.
    ///
    /// The distance between two noisy frames deviates from the clean distance
    /// by at most `|e1 - e2|`, which concentrates at `sigma * sqrt(2 D_x)`;
    /// the `+ 8` covers an eight-sigma chi tail.
    pub fn separability_noise_bound(&self) -> f64 {
        let dx = self.config.frame_dim as f64;
        self.separation_margin() / (2.0 * ((2.0 * dx).sqrt() + 8.0))
    }
}

fn gaussian_vec(rng: &mut seed::Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

fn has_full_column_rank(a: &Array2<f64>) -> bool {
    // Cholesky on the Gram matrix.
    let g = a.t().dot(a);
    let n = g.nrows();
    let scale = (0..n).map(|i| g[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-10 * scale {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

fn make_identities(config: &WorldConfig) -> Vec<Identity> {
    let mut rng = seed::rng(config.seed, "identities", 0);
    let mut out: Vec<Identity> = Vec::with_capacity(config.num_identities);
    while out.len() < config.num_identities {
        let v = gaussian_vec(&mut rng, config.appearance_dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        // pairwise distinct; with continuous sampling this only fails on a
        // degenerate 1-D appearance space
        if out.iter().any(|o| {
            o.appearance
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                < 1e-12
        }) {
            if config.appearance_dim == 1 && out.len() >= 2 {
                break;
            }
            continue;
        }
        out.push(Identity {
            id: out.len() as IdentityId,
            appearance: v,
        });
    }
    out
}

fn make_cameras(config: &WorldConfig) -> Vec<CameraModel> {
    let (dx, da) = (config.frame_dim, config.appearance_dim);
    let std = 1.0 / (dx as f64).sqrt();
    let norm = (1.0 + config.camera_shift * config.camera_shift).sqrt();
    let mut shared_rng = seed::rng(config.seed, "camera-shared", 0);
    let shared = Array2::from_shape_vec((dx, da), gaussian_vec(&mut shared_rng, dx * da, std))
        .expect("shape");
    (1..=config.num_cameras)
        .map(|camera_id| {
            let mut rng = seed::rng(config.seed, "camera", camera_id as u64);
            loop {
                let specific =
                    Array2::from_shape_vec((dx, da), gaussian_vec(&mut rng, dx * da, std))
                        .expect("shape");
                let transform = (&shared + &(specific * config.camera_shift)) / norm;
                if !has_full_column_rank(&transform) {
                    continue;
                }
                let offset = Array1::from(gaussian_vec(&mut rng, dx, config.offset_scale * std));
                return CameraModel {
                    camera_id,
                    transform,
                    offset,
                };
            }
        })
        .collect()
}

fn sample_dwell(config: &WorldConfig, rng: &mut seed::Rng) -> f64 {
    let q = config.mean_dwell;
    let w = config.dwell_halfwidth();
    let std = config.dwell_std();
    if std == 0.0 || w == 0.0 {
        return q;
    }
    let normal = Normal::new(q, std).expect("valid normal");
    loop {
        let d = normal.sample(rng);
        if (d - q).abs() <= w {
            return d;
        }
    }
}

fn make_path(config: &WorldConfig, entry: f64, dwell: f64, rng: &mut seed::Rng) -> Vec<PathPoint> {
    let [w, h] = config.scene_extent;
    let a = [rng.random::<f64>() * w, rng.random::<f64>() * h];
    let b = [rng.random::<f64>() * w, rng.random::<f64>() * h];
    let dt = 1.0 / config.frame_rate;
    let n = (dwell / dt).floor() as usize + 1;
    (0..n)
        .map(|m| {
            let t = entry + m as f64 * dt;
            let u = if dwell > 0.0 { (t - entry) / dwell } else { 0.0 };
            PathPoint {
                t,
                pos: [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])],
            }
        })
        .collect()
}

struct Visit {
    identity: IdentityId,
    camera: CameraId,
    entry: f64,
    dwell: f64,
}

/// Poisson arrivals for one camera with identity assignment.
fn camera_visits(config: &WorldConfig, camera: CameraId) -> Vec<Visit> {
    let mut rng = seed::rng(config.seed, "arrivals", camera as u64);
    let mut visits = Vec::new();
    if config.arrival_rate <= 0.0 {
        return visits;
    }
    let exp = Exp::new(config.arrival_rate).expect("positive rate");
    // last exit time per identity in this camera
    let mut last_exit: BTreeMap<IdentityId, f64> = BTreeMap::new();
    let all: Vec<IdentityId> = (0..config.num_identities as IdentityId).collect();
    let mut t = 0.0;
    loop {
        t += exp.sample(&mut rng);
        if t >= config.sim_duration {
            break;
        }
        let returning: Vec<IdentityId> = if config.reappearance {
            last_exit
                .iter()
                .filter(|(_, &exit)| exit < t)
                .map(|(&id, _)| id)
                .collect()
        } else {
            Vec::new()
        };
        let wants_return = config.reappearance && rng.random::<f64>() < config.reappear_prob;
        let chosen = if wants_return && !returning.is_empty() {
            returning.choose(&mut rng).copied()
        } else {
            let fresh: Vec<IdentityId> = all
                .iter()
                .copied()
                .filter(|id| !last_exit.contains_key(id))
                .collect();
            fresh.choose(&mut rng).copied()
        };
        // every identity already visited: the arrival is dropped
        let Some(identity) = chosen else { continue };
        let dwell = sample_dwell(config, &mut rng);
        last_exit.insert(identity, t + dwell);
        visits.push(Visit {
            identity,
            camera,
            entry: t,
            dwell,
        });
    }
    visits
}

/// Extra visits so every identity is seen by `min_cameras_per_identity` cameras.
fn coverage_visits(config: &WorldConfig, visits: &[Visit]) -> Vec<Visit> {
    let mut rng = seed::rng(config.seed, "coverage", 0);
    let mut seen: BTreeMap<IdentityId, Vec<CameraId>> = BTreeMap::new();
    for v in visits {
        let cams = seen.entry(v.identity).or_default();
        if !cams.contains(&v.camera) {
            cams.push(v.camera);
        }
    }
    let mut extra = Vec::new();
    for identity in 0..config.num_identities as IdentityId {
        let cams = seen.entry(identity).or_default();
        while cams.len() < config.min_cameras_per_identity {
            let free: Vec<CameraId> = (1..=config.num_cameras)
                .filter(|c| !cams.contains(c))
                .collect();
            let camera = *free.choose(&mut rng).expect("min cameras <= num cameras");
            cams.push(camera);
            let entry = rng.random::<f64>() * config.sim_duration;
            let dwell = sample_dwell(config, &mut rng);
            extra.push(Visit {
                identity,
                camera,
                entry,
                dwell,
            });
        }
    }
    extra
}

/// Generate a world. Deterministic in `config` (including its seed).
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let identities = make_identities(config);
    let cameras = make_cameras(config);

    let mut visits: Vec<Visit> = (1..=config.num_cameras)
        .flat_map(|c| camera_visits(config, c))
        .collect();
    let extra = coverage_visits(config, &visits);
    visits.extend(extra);
    visits.sort_by(|a, b| {
        a.camera
            .cmp(&b.camera)
            .then(a.entry.total_cmp(&b.entry))
            .then(a.identity.cmp(&b.identity))
    });

    let trajectories: Vec<Trajectory> = visits
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = seed::rng(config.seed, "path", i as u64);
            Trajectory {
                trajectory_id: i as u64,
                identity_id: v.identity,
                camera_id: v.camera,
                entry_time: v.entry,
                dwell: v.dwell,
                path: make_path(config, v.entry, v.dwell, &mut rng),
            }
        })
        .collect();

    let mut tracklets = Vec::new();
    for traj in &trajectories {
        let spans = fragment(
            traj,
            config.frag_rate,
            seed::derive(config.seed, "fragment", traj.trajectory_id),
        );
        for span in spans {
            let tracklet_id = tracklets.len() as TrackletId;
            let identity = &identities[span.identity_id as usize];
            let camera = &cameras[span.camera_id - 1];
            let frames = render_frames(
                identity,
                camera,
                span.path.len(),
                config.noise_sigma,
                seed::derive(config.seed, "frames", tracklet_id),
            );
            tracklets.push(TrackletRecord {
                tracklet_id,
                trajectory_id: span.trajectory_id,
                camera_id: span.camera_id,
                identity_id: span.identity_id,
                start_time: span.start_time,
                end_time: span.end_time,
                frame_times: span.path.iter().map(|p| p.t).collect(),
                positions: span.path.iter().map(|p| p.pos).collect(),
                frames,
            });
        }
    }

    Ok(World {
        config: config.clone(),
        identities,
        cameras,
        trajectories,
        tracklets,
    })
}

/// Cut a trajectory into tracklets at frame boundaries.
///
/// Produces `1 + Poisson(frag_rate - 1)` fragments (at most one per frame).
/// Each cut drops the link between two consecutive frames, so fragment spans
/// are pairwise disjoint and contained in the trajectory span.
pub fn fragment(trajectory: &Trajectory, frag_rate: f64, seed: u64) -> Vec<TrackletSpan> {
    let mut rng = seed::Rng::seed_from_u64(seed);
    let n = trajectory.path.len().max(1);
    let extra = if frag_rate > 1.0 {
        Poisson::new(frag_rate - 1.0)
            .map(|p| p.sample(&mut rng) as usize)
            .unwrap_or(0)
    } else {
        0
    };
    let pieces = (1 + extra).min(n);
    // choose pieces-1 distinct cut positions among the n-1 gaps
    let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, n - 1, pieces - 1).into_vec();
    cuts.iter_mut().for_each(|c| *c += 1);
    cuts.sort_unstable();
    let mut bounds = Vec::with_capacity(pieces + 1);
    bounds.push(0);
    bounds.extend(cuts);
    bounds.push(n);

    let path: Vec<PathPoint> = if trajectory.path.is_empty() {
        vec![PathPoint {
            t: trajectory.entry_time,
            pos: [0.0, 0.0],
        }]
    } else {
        trajectory.path.clone()
    };
    bounds
        .windows(2)
        .map(|w| {
            let seg = path[w[0]..w[1]].to_vec();
            TrackletSpan {
                trajectory_id: trajectory.trajectory_id,
                identity_id: trajectory.identity_id,
                camera_id: trajectory.camera_id,
                start_time: seg[0].t,
                end_time: seg[seg.len() - 1].t,
                path: seg,
            }
        })
        .collect()
}

/// Observe `count` frames of `identity` through `camera`.
///
/// Values are rounded to single precision so a world survives the
/// 32-bit sidecar format unchanged.
pub fn render_frames(
    identity: &Identity,
    camera: &CameraModel,
    count: usize,
    noise_sigma: f64,
    seed: u64,
) -> Array2<f64> {
    let clean = camera.project(ArrayView1::from(&identity.appearance));
    let dx = clean.len();
    let mut rng = seed::Rng::seed_from_u64(seed);
    Array2::from_shape_fn((count, dx), |(_, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (clean[j] + noise_sigma * z) as f32 as f64
    })
}

#[cfg(test)]
mod tests;
