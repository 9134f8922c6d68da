//! Central finite-difference check of the joint objective against the
//! analytic gradient, through the whole network.

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::losses::{joint_loss, LossConfig, SampleMeta};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub num_checked: usize,
    /// Largest `|fd - analytic| / max(|fd|, |analytic|, floor)`.
    pub max_rel_error: f64,
    /// Tensor name and index of the worst entry.
    pub worst: (String, usize),
    pub loss: f64,
}

/// Analytic gradient of the joint loss over every parameter, flattened in
/// checkpoint tensor order.
pub fn joint_gradient(
    params: &ModelParams,
    frames: ArrayView2<'_, f64>,
    samples: &[SampleMeta],
    config: &LossConfig,
) -> Result<(f64, ModelParams)> {
    let pass = params.forward(frames)?;
    let out = joint_loss(pass.features.view(), samples, &params.branches, config)?;
    let shared = params.backward(&pass, out.grad_features.view())?;
    let grads = ModelParams {
        activation: params.activation,
        bounded_features: params.bounded_features,
        layers: shared.layers,
        branches: out.grad_branches,
    };
    Ok((out.loss, grads))
}

fn loss_at(params: &ModelParams, frames: ArrayView2<'_, f64>, samples: &[SampleMeta], config: &LossConfig) -> Result<f64> {
    let features = params.forward(frames)?.features;
    Ok(joint_loss(features.view(), samples, &params.branches, config)?.loss)
}

/// Compare every analytic partial derivative with `(L(p+h) - L(p-h)) / 2h`.
/// `floor` keeps the relative error meaningful for derivatives near zero.
pub fn check_joint_gradient(
    params: &ModelParams,
    frames: &Array2<f64>,
    samples: &[SampleMeta],
    config: &LossConfig,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let (loss, grads) = joint_gradient(params, frames.view(), samples, config)?;
    let names: Vec<String> = grads.tensors().into_iter().map(|(n, _, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, _, v)| v.to_vec()).collect();
    let mut report = GradCheckReport {
        num_checked: 0,
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        loss,
    };
    let mut probe = params.clone();
    for (t, a) in analytic.iter().enumerate() {
        for (k, &g) in a.iter().enumerate() {
            let orig = probe.tensors_mut()[t][k];
            probe.tensors_mut()[t][k] = orig + h;
            let plus = loss_at(&probe, frames.view(), samples, config)?;
            probe.tensors_mut()[t][k] = orig - h;
            let minus = loss_at(&probe, frames.view(), samples, config)?;
            probe.tensors_mut()[t][k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(floor);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (names[t].clone(), k);
            }
            report.num_checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::CctaConfig;
    use crate::model::{init, ModelConfig};
    use crate::seed;
    use rand::Rng;

    #[test]
    fn small_network_passes() {
        let params = init(
            &ModelConfig {
                input_dim: 5,
                hidden_dims: vec![6],
                feature_dim: 4,
                per_camera_classes: vec![2, 2],
                activation: Default::default(),
                bounded_features: true,
            },
            2,
        )
        .unwrap();
        let mut rng = seed::rng(3, "gc", 0);
        let frames = Array2::from_shape_fn((8, 5), |_| rng.random_range(-1.0..1.0));
        let samples: Vec<SampleMeta> = (0..8)
            .map(|i| SampleMeta {
                camera: 1 + i / 4,
                label: 1 + (i as u32 / 2) % 2,
                tracklet_id: i as u64 / 2,
            })
            .collect();
        let config = LossConfig {
            lambda: 0.7,
            ccta: CctaConfig::new(1, 2.0),
        };
        let r = check_joint_gradient(&params, &frames, &samples, &config, 1e-5, 1e-6).unwrap();
        assert_eq!(r.num_checked, params.num_parameters());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
