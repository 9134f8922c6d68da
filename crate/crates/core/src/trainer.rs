//! Camera-balanced batches and the optimisation loop.
//!
//! Every batch holds the same number of tracklets from every camera and the
//! same number of frames from every tracklet. One forward pass feeds both
//! loss terms of a step.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    ccta_loss, default_k, joint_loss, pctd_loss, CctaConfig, DistanceKind, LossConfig, SampleMeta,
    TrackletBatchView,
};
use crate::model::{self, Activation, ModelConfig, ModelParams};
use crate::optim::{Adam, AdamConfig};
use crate::seed;
use crate::sstt::LabelledDataset;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Per-camera branches plus cross-camera association.
    #[default]
    Taudl,
    /// Per-camera branches only.
    PctdOnly,
    /// One classifier over the concatenated per-camera label sets.
    Jcc,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::Jcc, TrainMode::PctdOnly, TrainMode::Taudl];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Taudl => "taudl",
            TrainMode::PctdOnly => "pctd_only",
            TrainMode::Jcc => "jcc",
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taudl" => Ok(TrainMode::Taudl),
            "pctd_only" | "pctd" => Ok(TrainMode::PctdOnly),
            "jcc" => Ok(TrainMode::Jcc),
            other => Err(Error::Config(format!("unknown mode {other}"))),
        }
    }
}

/// Shared-network shape; input width and branch sizes come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub bounded_features: bool,
}

impl ArchConfig {
    pub fn model_config(&self, input_dim: usize, per_camera_classes: Vec<usize>) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            per_camera_classes,
            activation: self.activation,
            bounded_features: self.bounded_features,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub every: usize,
    pub factor: f64,
}

fn default_frames_per_tracklet() -> usize {
    4
}
fn default_lr() -> f64 {
    3.5e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_lambda() -> f64 {
    0.7
}
fn default_sigma() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub tracklets_per_camera: usize,
    #[serde(default = "default_frames_per_tracklet")]
    pub frames_per_tracklet: usize,
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Cross-view neighbours; `floor(T/2)` (at least 1) when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub distance: DistanceKind,
    #[serde(default)]
    pub include_self: bool,
    #[serde(default)]
    pub cross_view_denominator: bool,
    /// Steps trained with the per-camera term only before association starts.
    #[serde(default)]
    pub ccta_warmup_steps: usize,
    #[serde(default)]
    pub lr_decay: Option<LrDecay>,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub mode: TrainMode,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self, num_cameras: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.tracklets_per_camera == 0 {
            return bad("tracklets_per_camera must be >= 1");
        }
        if self.frames_per_tracklet < 2 {
            return bad("frames_per_tracklet must be >= 2");
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)");
        }
        if self.k == Some(0) {
            return bad("k must be >= 1");
        }
        if num_cameras < 2 && self.mode == TrainMode::Taudl {
            return bad("association training needs at least two cameras");
        }
        self.loss_config(num_cameras).validate()
    }

    /// `T * tracklets_per_camera * frames_per_tracklet`.
    pub fn batch_size(&self, num_cameras: usize) -> usize {
        num_cameras * self.tracklets_per_camera * self.frames_per_tracklet
    }

    pub fn loss_config(&self, num_cameras: usize) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            ccta: CctaConfig {
                k: self.k.unwrap_or_else(|| default_k(num_cameras)),
                sigma: self.sigma,
                distance: self.distance,
                include_self: self.include_self,
                cross_view_denominator: self.cross_view_denominator,
            },
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.lr_decay {
            Some(d) if d.every > 0 => self.learning_rate * d.factor.powi((step / d.every) as i32),
            _ => self.learning_rate,
        }
    }
}

/// Frames and learner-visible metadata for one step.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `batch_size x frame_dim`, camera-major, then tracklet, then frame.
    pub frames: Array2<f64>,
    pub samples: Vec<SampleMeta>,
    /// Cameras that had to be sampled with replacement.
    pub short_cameras: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draw a camera-balanced batch.
pub fn build_batch(dataset: &LabelledDataset, config: &TrainConfig, step_seed: u64) -> Result<Batch> {
    let t = dataset.num_cameras();
    let frame_dim = dataset
        .iter()
        .next()
        .map(|l| l.tracklet.frames.ncols())
        .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
    let per_cam = config.tracklets_per_camera;
    let per_trk = config.frames_per_tracklet;
    let mut frames = Array2::zeros((t * per_cam * per_trk, frame_dim));
    let mut samples = Vec::with_capacity(frames.nrows());
    let mut short_cameras = Vec::new();
    let mut row = 0;
    for (c, cam) in dataset.cameras.iter().enumerate() {
        let camera = c + 1;
        if cam.is_empty() {
            return Err(Error::InvalidInput(format!("camera {camera} has no tracklets")));
        }
        let mut rng = seed::Rng::seed_from_u64(seed::derive(step_seed, "batch-camera", camera as u64));
        let picks: Vec<usize> = if cam.len() >= per_cam {
            index::sample(&mut rng, cam.len(), per_cam).into_vec()
        } else {
            short_cameras.push(camera);
            let all: Vec<usize> = (0..cam.len()).collect();
            (0..per_cam).map(|_| *all.choose(&mut rng).expect("non-empty")).collect()
        };
        for k in picks {
            let lt = &cam[k];
            let n = lt.tracklet.num_frames();
            let chosen: Vec<usize> = if n >= per_trk {
                index::sample(&mut rng, n, per_trk).into_vec()
            } else {
                let all: Vec<usize> = (0..n).collect();
                (0..per_trk).map(|_| *all.choose(&mut rng).expect("non-empty")).collect()
            };
            for f in chosen {
                frames.row_mut(row).assign(&lt.tracklet.frames.row(f));
                samples.push(SampleMeta {
                    camera,
                    label: lt.label,
                    tracklet_id: lt.tracklet.tracklet_id,
                });
                row += 1;
            }
        }
    }
    Ok(Batch {
        frames,
        samples,
        short_cameras,
    })
}

/// One row of the metrics trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub pctd: f64,
    /// Association loss of the batch; logged in every mode, `None` when the
    /// batch covers a single camera.
    pub ccta: Option<f64>,
    pub joint: f64,
}

pub const METRICS_FORMAT_VERSION: u32 = 1;
const METRICS_FORMAT: &str = "taudl-metrics";

#[derive(Serialize, Deserialize)]
struct MetricsHeader {
    format: String,
    version: u32,
}

/// Header line for a metrics JSON-lines file; rows follow, one per step.
pub fn metrics_header() -> String {
    serde_json::to_string(&MetricsHeader {
        format: METRICS_FORMAT.into(),
        version: METRICS_FORMAT_VERSION,
    })
    .expect("header serialises")
}

pub fn metrics_line(row: &StepMetrics) -> Result<String> {
    Ok(serde_json::to_string(row)?)
}

pub fn parse_metrics(text: &str) -> Result<Vec<StepMetrics>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: MetricsHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty metrics file".into()))?,
    )?;
    if header.format != METRICS_FORMAT {
        return Err(Error::Format(format!("expected format {METRICS_FORMAT}, found {}", header.format)));
    }
    if header.version != METRICS_FORMAT_VERSION {
        return Err(Error::Version {
            expected: METRICS_FORMAT_VERSION,
            found: header.version,
        });
    }
    lines.map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: Adam,
    pub step: usize,
    pub metrics: Vec<StepMetrics>,
}

/// Offsets turning camera-local labels into JCC class indices: camera `t`,
/// label `y` becomes `y + sum_{u < t} M_u`.
pub fn jcc_label_offsets(label_counts: &[usize]) -> Vec<u32> {
    let mut acc = 0u32;
    label_counts
        .iter()
        .map(|&m| {
            let o = acc;
            acc += m as u32;
            o
        })
        .collect()
}

pub fn jcc_remap(samples: &[SampleMeta], offsets: &[u32]) -> Vec<SampleMeta> {
    samples
        .iter()
        .map(|s| SampleMeta {
            camera: 1,
            label: s.label + offsets[s.camera - 1],
            tracklet_id: s.tracklet_id,
        })
        .collect()
}

/// Step-by-step trainer; [`train`] runs it to completion.
pub struct Trainer<'a> {
    dataset: &'a LabelledDataset,
    config: TrainConfig,
    loss: LossConfig,
    jcc_offsets: Option<Vec<u32>>,
    pub state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a LabelledDataset, arch: &ArchConfig, config: &TrainConfig) -> Result<Self> {
        dataset.validate()?;
        let t = dataset.num_cameras();
        config.validate(t)?;
        let input_dim = dataset
            .iter()
            .next()
            .map(|l| l.tracklet.frames.ncols())
            .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
        let counts = dataset.label_counts();
        let (classes, jcc_offsets) = match config.mode {
            TrainMode::Jcc => (vec![counts.iter().sum()], Some(jcc_label_offsets(&counts))),
            _ => (counts, None),
        };
        let params = model::init(
            &arch.model_config(input_dim, classes),
            seed::derive(config.seed, "init", 0),
        )?;
        let optimizer = Adam::new(config.adam(), &params);
        for (c, &n) in dataset.label_counts().iter().enumerate() {
            if n < config.tracklets_per_camera {
                log::warn!(
                    "camera {} has {n} tracklets, fewer than {}; sampling with replacement",
                    c + 1,
                    config.tracklets_per_camera
                );
            }
        }
        Ok(Trainer {
            dataset,
            loss: config.loss_config(t),
            config: config.clone(),
            jcc_offsets,
            state: TrainState {
                params,
                optimizer,
                step: 0,
                metrics: Vec::new(),
            },
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.steps
    }

    /// Run one optimisation step and return its metrics row.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let batch = build_batch(
            self.dataset,
            &self.config,
            seed::derive(self.config.seed, "batch", step as u64),
        )?;
        let params = &self.state.params;
        let pass = params.forward(batch.frames.view())?;
        if pass.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.diagnostic(step, f64::NAN, None, f64::NAN)));
        }
        let features = pass.features.view();
        let multi_camera = self.dataset.num_cameras() >= 2;

        let losses = (|| match self.config.mode {
            TrainMode::Jcc => {
                let offsets = self.jcc_offsets.as_ref().expect("jcc offsets");
                let remapped = jcc_remap(&batch.samples, offsets);
                let out = pctd_loss(features, &remapped, &params.branches)?;
                let ccta = if multi_camera {
                    let view = TrackletBatchView::from_batch(features, &batch.samples)?;
                    Some(ccta_loss(&view, &self.loss.ccta)?.loss)
                } else {
                    None
                };
                Ok((out.loss, ccta, out.loss, out.grad_features, out.grad_branches))
            }
            mode => {
                let mut loss = self.loss;
                if mode == TrainMode::PctdOnly || step < self.config.ccta_warmup_steps {
                    loss.lambda = 0.0;
                }
                if multi_camera {
                    let out = joint_loss(features, &batch.samples, &params.branches, &loss)?;
                    Ok((out.pctd, Some(out.ccta), out.loss, out.grad_features, out.grad_branches))
                } else {
                    let out = pctd_loss(features, &batch.samples, &params.branches)?;
                    Ok((out.loss, None, out.loss, out.grad_features, out.grad_branches))
                }
            }
        })();
        let (pctd, ccta, joint, grad_features, grad_branches) = match losses {
            Err(Error::NonFinite(_)) => {
                return Err(Error::NonFinite(self.diagnostic(step, f64::NAN, None, f64::NAN)))
            }
            other => other?,
        };

        if !joint.is_finite() || !pctd.is_finite() || ccta.is_some_and(|c| !c.is_finite()) {
            return Err(Error::NonFinite(self.diagnostic(step, pctd, ccta, joint)));
        }

        let shared = params.backward(&pass, grad_features.view())?;
        let grads = ModelParams {
            activation: params.activation,
            bounded_features: params.bounded_features,
            layers: shared.layers,
            branches: grad_branches,
        };
        let lr = self.config.learning_rate_at(step);
        self.state
            .optimizer
            .step(&mut self.state.params, &grads, lr);
        if !self.state.params.is_finite() {
            return Err(Error::NonFinite(self.diagnostic(step, pctd, ccta, joint)));
        }

        let row = StepMetrics {
            step,
            pctd,
            ccta,
            joint,
        };
        self.state.metrics.push(row);
        self.state.step += 1;
        Ok(row)
    }

    fn diagnostic(&self, step: usize, pctd: f64, ccta: Option<f64>, joint: f64) -> String {
        let norms: BTreeMap<String, f64> = self
            .state
            .params
            .tensors()
            .into_iter()
            .map(|(name, _, v)| (name, v.iter().fold(0.0f64, |a, x| a.max(x.abs()))))
            .collect();
        format!(
            "training diverged at step {step} (pctd={pctd}, ccta={ccta:?}, joint={joint}); \
             max |param| per tensor: {norms:?}"
        )
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }
}

/// Train for `config.steps` steps in `config.mode`.
pub fn train(dataset: &LabelledDataset, arch: &ArchConfig, config: &TrainConfig) -> Result<TrainState> {
    let mut trainer = Trainer::new(dataset, arch, config)?;
    while !trainer.is_done() {
        trainer.step()?;
    }
    Ok(trainer.into_state())
}

/// Joint-camera classification baseline: [`train`] with the JCC objective.
pub fn jcc_baseline(
    dataset: &LabelledDataset,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<TrainState> {
    let config = TrainConfig {
        mode: TrainMode::Jcc,
        ..config.clone()
    };
    train(dataset, arch, &config)
}
