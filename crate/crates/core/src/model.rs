//! Shared embedding network with one linear classifier branch per camera.
//!
//! The shared part is a small MLP (`tanh` between layers, linear output).
//! Branch `t` is a `feature_dim x M_t` matrix with no bias, so the logits of
//! camera `t` are `W_t^T x`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::world::CameraId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub per_camera_classes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Apply the activation to the feature layer too, bounding every feature.
    #[serde(default)]
    pub bounded_features: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config("input_dim and feature_dim must be > 0".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims must be positive".into()));
        }
        if self.per_camera_classes.is_empty() || self.per_camera_classes.contains(&0) {
            return Err(Error::Config("every camera branch needs >= 1 class".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub activation: Activation,
    pub bounded_features: bool,
    pub layers: Vec<Dense>,
    /// `feature_dim x M_t` per camera.
    pub branches: Vec<Array2<f64>>,
}

fn gaussian_f32(rng: &mut seed::Rng, shape: (usize, usize), std: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || {
        let z: f64 = StandardNormal.sample(rng);
        (z * std) as f32 as f64
    })
}

/// Scaled-Gaussian initialisation, `std = 1/sqrt(fan_in)`, biases zero.
///
/// Shared layers and each branch draw from their own streams, so two models
/// with equal `hidden_dims` and seed share the same shared-layer weights
/// regardless of their branch layout. Values are rounded to single precision
/// so a fresh model survives a checkpoint round trip bit for bit.
pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut dims = vec![config.input_dim];
    dims.extend(&config.hidden_dims);
    dims.push(config.feature_dim);
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let mut rng = seed::rng(seed, "init-shared", l as u64);
            Dense {
                weight: gaussian_f32(&mut rng, (w[1], w[0]), 1.0 / (w[0] as f64).sqrt()),
                bias: Array1::zeros(w[1]),
            }
        })
        .collect();
    let branches = config
        .per_camera_classes
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            let mut rng = seed::rng(seed, "init-branch", t as u64);
            gaussian_f32(
                &mut rng,
                (config.feature_dim, m),
                1.0 / (config.feature_dim as f64).sqrt(),
            )
        })
        .collect();
    Ok(ModelParams {
        activation: config.activation,
        bounded_features: config.bounded_features,
        layers,
        branches,
    })
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Input to each layer; `inputs[0]` is the frame batch.
    inputs: Vec<Array2<f64>>,
    pub features: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct SharedGradients {
    pub layers: Vec<Dense>,
    pub input: Array2<f64>,
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.ncols())
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.nrows())
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn branch(&self, camera: CameraId) -> Result<&Array2<f64>> {
        camera
            .checked_sub(1)
            .and_then(|i| self.branches.get(i))
            .ok_or(Error::UnknownCamera(camera))
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.input_dim(),
            hidden_dims: self.layers[..self.layers.len().saturating_sub(1)]
                .iter()
                .map(|l| l.weight.nrows())
                .collect(),
            feature_dim: self.feature_dim(),
            per_camera_classes: self.branches.iter().map(|b| b.ncols()).collect(),
            activation: self.activation,
            bounded_features: self.bounded_features,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            activation: self.activation,
            bounded_features: self.bounded_features,
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| Array2::zeros(b.raw_dim()))
                .collect(),
        }
    }

    /// Named tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, d) in self.layers.iter().enumerate() {
            out.push((
                format!("shared.{l}.weight"),
                d.weight.shape().to_vec(),
                d.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("shared.{l}.bias"),
                d.bias.shape().to_vec(),
                d.bias.as_slice().expect("standard layout"),
            ));
        }
        for (t, b) in self.branches.iter().enumerate() {
            out.push((
                format!("branch.{}.weight", t + 1),
                b.shape().to_vec(),
                b.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for d in &mut self.layers {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        for b in &mut self.branches {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Embed a batch of frames (`n x input_dim`) into `n x feature_dim`.
    pub fn forward(&self, frames: ArrayView2<'_, f64>) -> Result<ForwardPass> {
        if frames.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "frames have {} columns, model expects {}",
                frames.ncols(),
                self.input_dim()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input frames".into()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = frames.to_owned();
        for (l, d) in self.layers.iter().enumerate() {
            let mut z = h.dot(&d.weight.t()) + &d.bias;
            if l != last || self.bounded_features {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            inputs.push(h);
            h = z;
        }
        Ok(ForwardPass {
            inputs,
            features: h,
        })
    }

    /// Convenience: features only.
    pub fn embed(&self, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(frames)?.features)
    }

    /// Back-propagate `grad_features` (`n x feature_dim`) through the shared
    /// layers.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_features: ArrayView2<'_, f64>,
    ) -> Result<SharedGradients> {
        if grad_features.raw_dim() != pass.features.raw_dim() {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} does not match features {:?}",
                grad_features.shape(),
                pass.features.shape()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        // gradient w.r.t. the output of the current layer
        let mut g = grad_features.to_owned();
        if self.bounded_features {
            let act = self.activation;
            g.zip_mut_with(&pass.features, |gi, &h| *gi *= act.derivative_from_output(h));
        }
        for l in (0..self.layers.len()).rev() {
            let input = &pass.inputs[l];
            let weight_grad = g.t().dot(input);
            let bias_grad = g.sum_axis(Axis(0));
            let mut g_in = g.dot(&self.layers[l].weight);
            if l > 0 {
                // input of layer l is the activation output of layer l-1
                let act = self.activation;
                g_in.zip_mut_with(input, |gi, &h| *gi *= act.derivative_from_output(h));
            }
            grads.push(Dense {
                weight: weight_grad,
                bias: bias_grad,
            });
            g = g_in;
        }
        grads.reverse();
        Ok(SharedGradients {
            layers: grads,
            input: g,
        })
    }

    /// `W_t^T x` for every row of `features`; `n x M_t`.
    pub fn branch_logits(
        &self,
        features: ArrayView2<'_, f64>,
        camera: CameraId,
    ) -> Result<Array2<f64>> {
        let w = self.branch(camera)?;
        if features.ncols() != w.nrows() {
            return Err(Error::Dimension(format!(
                "features have {} columns, branch expects {}",
                features.ncols(),
                w.nrows()
            )));
        }
        Ok(features.dot(w))
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"TAUDLCKP";

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    activation: Activation,
    #[serde(default)]
    bounded_features: bool,
    tensors: Vec<TensorHeader>,
}

/// Checkpoint bytes: 8-byte magic `TAUDLCKP`, `u32` LE version, `u32` LE
/// header length, a JSON header naming every tensor and its shape, then the
/// tensors in header order as little-endian `f32`, row-major.
pub fn serialize(params: &ModelParams) -> Vec<u8> {
    let tensors = params.tensors();
    let header = CheckpointHeader {
        activation: params.activation,
        bounded_features: params.bounded_features,
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorHeader {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * params.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, values) in tensors {
        for v in values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn deserialize(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated checkpoint".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = read_u32(&mut r)? as usize;
    if r.len() < len {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&r[..len])?;
    r = &r[len..];

    let mut take = |shape: &[usize]| -> Result<Vec<f64>> {
        let n: usize = shape.iter().product();
        if r.len() < 4 * n {
            return Err(Error::Format("truncated checkpoint data".into()));
        }
        let (head, rest) = r.split_at(4 * n);
        r = rest;
        Ok(head
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    };
    let matrix = |shape: &[usize], v: Vec<f64>| -> Result<Array2<f64>> {
        match shape {
            [a, b] => Array2::from_shape_vec((*a, *b), v).map_err(|e| Error::Format(e.to_string())),
            _ => Err(Error::Format(format!("expected a matrix, got shape {shape:?}"))),
        }
    };

    let mut layers: Vec<Dense> = Vec::new();
    let mut branches = Vec::new();
    let mut pending_weight: Option<Array2<f64>> = None;
    for t in &header.tensors {
        let values = take(&t.shape)?;
        let parts: Vec<&str> = t.name.split('.').collect();
        match parts.as_slice() {
            ["shared", _, "weight"] => pending_weight = Some(matrix(&t.shape, values)?),
            ["shared", _, "bias"] => {
                let weight = pending_weight
                    .take()
                    .ok_or_else(|| Error::Format(format!("{} without weight", t.name)))?;
                if weight.nrows() != values.len() {
                    return Err(Error::Format(format!("{} has wrong length", t.name)));
                }
                layers.push(Dense {
                    weight,
                    bias: Array1::from(values),
                });
            }
            ["branch", _, "weight"] => branches.push(matrix(&t.shape, values)?),
            _ => return Err(Error::Format(format!("unknown tensor {}", t.name))),
        }
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint data".into()));
    }
    if layers.is_empty() {
        return Err(Error::Format("checkpoint has no shared layers".into()));
    }
    for w in layers.windows(2) {
        if w[0].weight.nrows() != w[1].weight.ncols() {
            return Err(Error::Format("shared layer shapes do not chain".into()));
        }
    }
    let fdim = layers.last().map(|l| l.weight.nrows()).unwrap_or(0);
    if branches.iter().any(|b: &Array2<f64>| b.nrows() != fdim) {
        return Err(Error::Format("branch rows differ from feature_dim".into()));
    }
    Ok(ModelParams {
        activation: header.activation,
        bounded_features: header.bounded_features,
        layers,
        branches,
    })
}

pub fn save_checkpoint(params: &ModelParams, path: &std::path::Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&serialize(params))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize(&bytes)
}
