//! Training objectives.
//!
//! * [`ce_loss`]: softmax cross-entropy of one sample against its camera's
//!   label space.
//! * [`pctd_loss`]: per-camera tracklet discrimination, the batch mean of the
//!   per-sample cross-entropies, each scored by its own camera branch.
//! * [`ccta_loss`]: cross-camera tracklet association over in-batch
//!   tracklet means. For anchor `i` with `K` nearest tracklets `N_i` from
//!   other cameras,
//!   `L_i = -log( sum_{z in N_i} exp(-d(s_i, z) / 2σ²) / sum_{j != i} exp(-d(s_i, s_j) / 2σ²) )`
//!   with `d` the plain Euclidean distance; the loss is the mean over anchors.
//! * [`joint_loss`]: `(1 - λ) pctd + λ ccta` on the same batch.
//!
//! Every function returns gradients alongside the value; the shared network
//! receives them through [`crate::model::ModelParams::backward`].

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{CameraId, TrackletId};

/// What the learner knows about one frame in a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub camera: CameraId,
    /// 1-based label in the camera's label space.
    pub label: u32,
    pub tracklet_id: TrackletId,
}

/// Stable `log(sum(exp(v)))` over the selected entries, with the max
/// entry's term kept out of the sum so `log1p` stays exact for dominant
/// entries.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut seen_max = false;
    let mut rest = 0.0;
    for v in values {
        if v == m && !seen_max {
            seen_max = true;
        } else {
            rest += (v - m).exp();
        }
    }
    m + rest.ln_1p()
}

fn check_label(label: u32, classes: usize) -> Result<usize> {
    if label == 0 || label as usize > classes {
        return Err(Error::InvalidInput(format!(
            "label {label} outside 1..={classes}"
        )));
    }
    Ok(label as usize - 1)
}

/// `-log softmax(logits)[label]`, label 1-based.
pub fn ce_loss(logits: ArrayView1<'_, f64>, label: u32) -> Result<f64> {
    Ok(ce_loss_grad(logits, label)?.0)
}

/// Cross-entropy and its gradient with respect to the logits.
pub fn ce_loss_grad(logits: ArrayView1<'_, f64>, label: u32) -> Result<(f64, Array1<f64>)> {
    let y = check_label(label, logits.len())?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let argmax = logits.iter().position(|&v| v == m).expect("non-empty");
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != argmax)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    let loss = (m - logits[y]) + rest.ln_1p();
    let z = 1.0 + rest;
    let mut grad = logits.mapv(|v| (v - m).exp() / z);
    grad[y] -= 1.0;
    Ok((loss.max(0.0), grad))
}

#[derive(Clone, Debug)]
pub struct PctdOutput {
    pub loss: f64,
    /// `n x D`
    pub grad_features: Array2<f64>,
    /// Same shapes as the branches.
    pub grad_branches: Vec<Array2<f64>>,
}

/// Mean per-sample cross-entropy, each sample against its own camera branch.
///
/// `features` is `n x D`; `branches[t - 1]` is camera `t`'s `D x M_t` matrix.
pub fn pctd_loss(
    features: ArrayView2<'_, f64>,
    samples: &[SampleMeta],
    branches: &[Array2<f64>],
) -> Result<PctdOutput> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if features.nrows() != samples.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} samples",
            features.nrows(),
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mut grad_features = Array2::zeros(features.raw_dim());
    let mut grad_branches: Vec<Array2<f64>> =
        branches.iter().map(|b| Array2::zeros(b.raw_dim())).collect();
    // per-camera sums first, then the batch normaliser
    let mut per_camera: BTreeMap<CameraId, f64> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let w = s
            .camera
            .checked_sub(1)
            .and_then(|c| branches.get(c))
            .ok_or(Error::UnknownCamera(s.camera))?;
        let x = features.row(i);
        if x.len() != w.nrows() {
            return Err(Error::Dimension(format!(
                "feature width {} vs branch rows {}",
                x.len(),
                w.nrows()
            )));
        }
        let logits = w.t().dot(&x);
        let (loss, g) = ce_loss_grad(logits.view(), s.label)?;
        *per_camera.entry(s.camera).or_default() += loss;
        let g = g / n;
        // dW = x g^T, dx = W g
        let gw = &mut grad_branches[s.camera - 1];
        for (d, &xd) in x.iter().enumerate() {
            for (k, &gk) in g.iter().enumerate() {
                gw[(d, k)] += xd * gk;
            }
        }
        grad_features.row_mut(i).assign(&w.dot(&g));
    }
    let loss = per_camera.values().sum::<f64>() / n;
    Ok(PctdOutput {
        loss,
        grad_features,
        grad_branches,
    })
}

/// In-batch tracklets: mean feature per `(camera, tracklet)` and the batch
/// rows that make it up.
#[derive(Clone, Debug)]
pub struct TrackletBatchView {
    pub keys: Vec<(CameraId, TrackletId)>,
    pub members: Vec<Vec<usize>>,
    /// `num_tracklets x D`
    pub means: Array2<f64>,
    /// In-batch tracklet count per camera.
    pub camera_counts: BTreeMap<CameraId, usize>,
}

impl TrackletBatchView {
    /// Group rows of `features` by `(camera, tracklet_id)`, in order of first
    /// appearance.
    pub fn from_batch(features: ArrayView2<'_, f64>, samples: &[SampleMeta]) -> Result<Self> {
        if features.nrows() != samples.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} samples",
                features.nrows(),
                samples.len()
            )));
        }
        let mut index: BTreeMap<(CameraId, TrackletId), usize> = BTreeMap::new();
        let mut keys = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (row, s) in samples.iter().enumerate() {
            let key = (s.camera, s.tracklet_id);
            let k = *index.entry(key).or_insert_with(|| {
                keys.push(key);
                members.push(Vec::new());
                keys.len() - 1
            });
            members[k].push(row);
        }
        let mut means = Array2::zeros((keys.len(), features.ncols()));
        for (k, rows) in members.iter().enumerate() {
            let mut m = means.row_mut(k);
            for &r in rows {
                m += &features.row(r);
            }
            m /= rows.len() as f64;
        }
        let mut camera_counts = BTreeMap::new();
        for (c, _) in &keys {
            *camera_counts.entry(*c).or_default() += 1;
        }
        Ok(TrackletBatchView {
            keys,
            members,
            means,
            camera_counts,
        })
    }

    /// Build directly from tracklet means (one pseudo-frame per tracklet).
    pub fn from_means(keys: Vec<(CameraId, TrackletId)>, means: Array2<f64>) -> Result<Self> {
        let samples: Vec<SampleMeta> = keys
            .iter()
            .map(|&(camera, tracklet_id)| SampleMeta {
                camera,
                label: 1,
                tracklet_id,
            })
            .collect();
        let view = Self::from_batch(means.view(), &samples)?;
        if view.keys.len() != keys.len() {
            return Err(Error::InvalidInput("duplicate tracklet keys".into()));
        }
        Ok(view)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Spread gradients on the means back onto the batch rows.
    pub fn backprop(&self, grad_means: ArrayView2<'_, f64>, num_rows: usize) -> Array2<f64> {
        let mut out = Array2::zeros((num_rows, grad_means.ncols()));
        for (k, rows) in self.members.iter().enumerate() {
            let g = grad_means.row(k).to_owned() / rows.len() as f64;
            for &r in rows {
                out.row_mut(r).assign(&g);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `||a - b||`
    #[default]
    Euclidean,
    /// `||a - b||²`
    SquaredEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CctaConfig {
    pub k: usize,
    pub sigma: f64,
    #[serde(default)]
    pub distance: DistanceKind,
    /// Keep the anchor's own `exp(0)` term in the denominator.
    #[serde(default)]
    pub include_self: bool,
    /// Restrict the denominator to tracklets from other cameras.
    #[serde(default)]
    pub cross_view_denominator: bool,
}

impl CctaConfig {
    pub fn new(k: usize, sigma: f64) -> Self {
        CctaConfig {
            k,
            sigma,
            distance: DistanceKind::Euclidean,
            include_self: false,
            cross_view_denominator: false,
        }
    }
}

/// Default neighbour count for `T` cameras: `floor(T / 2)`, at least 1.
pub fn default_k(num_cameras: usize) -> usize {
    (num_cameras / 2).max(1)
}

#[derive(Clone, Debug)]
pub struct CctaOutput {
    pub loss: f64,
    /// `num_tracklets x D`
    pub grad_means: Array2<f64>,
    /// Chosen cross-view neighbours per anchor (indices into the view).
    pub neighbours: Vec<Vec<usize>>,
}

fn pair_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, kind: DistanceKind) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match kind {
        DistanceKind::SquaredEuclidean => sq,
        DistanceKind::Euclidean => sq.sqrt(),
    }
}

/// `dd(a, b)/da = w * (a - b)`; returns `w`. Subgradient 0 at coincident points.
fn distance_slope(d: f64, kind: DistanceKind) -> f64 {
    match kind {
        DistanceKind::SquaredEuclidean => 2.0,
        DistanceKind::Euclidean if d > 0.0 => 1.0 / d,
        DistanceKind::Euclidean => 0.0,
    }
}

/// Cross-camera tracklet association loss over one batch view.
///
/// Neighbours are the `min(K, available)` closest tracklets from other
/// cameras, ties broken by lower tracklet id, recomputed from the current
/// means on every call.
pub fn ccta_loss(view: &TrackletBatchView, config: &CctaConfig) -> Result<CctaOutput> {
    if view.camera_counts.len() < 2 {
        return Err(Error::InvalidInput(
            "cross-camera association needs tracklets from at least two cameras".into(),
        ));
    }
    if config.k == 0 || !(config.sigma > 0.0) {
        return Err(Error::Config("CCTA needs K >= 1 and sigma > 0".into()));
    }
    if view.means.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tracklet means".into()));
    }
    let n = view.len();
    let scale = 1.0 / (2.0 * config.sigma * config.sigma);
    let s = &view.means;

    let mut dist = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pair_distance(s.row(i), s.row(j), config.distance);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }

    let mut loss = 0.0;
    // w[(i, j)]: dL/d(s_i - s_j) = w_ij (s_i - s_j) for the pair term of anchor i
    let mut w = Array2::<f64>::zeros((n, n));
    let mut neighbours = Vec::with_capacity(n);
    let anchors = n as f64;
    let mut coef = vec![0.0; n];
    for i in 0..n {
        let cam_i = view.keys[i].0;
        let mut cross: Vec<usize> = (0..n).filter(|&j| view.keys[j].0 != cam_i).collect();
        cross.sort_by(|&a, &b| {
            dist[(i, a)]
                .total_cmp(&dist[(i, b)])
                .then(view.keys[a].1.cmp(&view.keys[b].1))
        });
        cross.truncate(config.k);
        let denom: Vec<usize> = (0..n)
            .filter(|&j| {
                if j == i {
                    config.include_self
                } else {
                    !config.cross_view_denominator || view.keys[j].0 != cam_i
                }
            })
            .collect();

        let logit = |j: usize| -dist[(i, j)] * scale;
        let lse_num = log_sum_exp(cross.iter().map(|&j| logit(j)));
        let lse_den = log_sum_exp(denom.iter().map(|&j| logit(j)));
        loss += lse_den - lse_num;

        // dL_i/d(logit_j) = p_den(j) - p_num(j); d(logit_j)/d(d_ij) = -scale
        coef.iter_mut().for_each(|c| *c = 0.0);
        for &j in &denom {
            coef[j] += (logit(j) - lse_den).exp();
        }
        for &j in &cross {
            coef[j] -= (logit(j) - lse_num).exp();
        }
        for j in 0..n {
            if j != i && coef[j] != 0.0 {
                w[(i, j)] = -scale * coef[j] * distance_slope(dist[(i, j)], config.distance) / anchors;
            }
        }
        neighbours.push(cross);
    }
    // G = diag(rowsum W + colsum W) S - (W + W^T) S
    let sym = &w + &w.t();
    let deg = sym.sum_axis(Axis(1));
    let mut grad_means = sym.dot(s) * -1.0;
    for (mut g, (row, &d)) in grad_means.rows_mut().into_iter().zip(s.rows().into_iter().zip(&deg)) {
        g.scaled_add(d, &row);
    }
    Ok(CctaOutput {
        loss: loss / anchors,
        grad_means,
        neighbours,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub ccta: CctaConfig,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must be in [0, 1]".into()));
        }
        if self.ccta.k == 0 || !(self.ccta.sigma > 0.0) {
            return Err(Error::Config("K must be >= 1 and sigma > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct JointOutput {
    pub loss: f64,
    pub pctd: f64,
    pub ccta: f64,
    /// `n x D`, gradient on the frame features through both terms.
    pub grad_features: Array2<f64>,
    /// Branch gradients, PCTD term only.
    pub grad_branches: Vec<Array2<f64>>,
}

/// `(1 - λ) pctd + λ ccta`, both terms computed on the same batch.
pub fn joint_loss(
    features: ArrayView2<'_, f64>,
    samples: &[SampleMeta],
    branches: &[Array2<f64>],
    config: &LossConfig,
) -> Result<JointOutput> {
    config.validate()?;
    let lambda = config.lambda;
    let pctd = pctd_loss(features, samples, branches)?;
    let view = TrackletBatchView::from_batch(features, samples)?;
    let ccta = ccta_loss(&view, &config.ccta)?;
    let ccta_rows = view.backprop(ccta.grad_means.view(), features.nrows());

    let grad_features = pctd.grad_features * (1.0 - lambda) + ccta_rows * lambda;
    let grad_branches = pctd
        .grad_branches
        .into_iter()
        .map(|g| g * (1.0 - lambda))
        .collect();
    Ok(JointOutput {
        loss: (1.0 - lambda) * pctd.loss + lambda * ccta.loss,
        pctd: pctd.loss,
        ccta: ccta.loss,
        grad_features,
        grad_branches,
    })
}
