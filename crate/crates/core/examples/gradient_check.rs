//! Finite-difference check of the joint loss gradient on small batches.
//!
//! cargo run --release --example gradient_check

use ndarray::Array2;
use rand::Rng;
use taudl::gradcheck::check_joint_gradient;
use taudl::losses::{CctaConfig, DistanceKind, LossConfig, SampleMeta};
use taudl::model::{init, ModelConfig};
use taudl::seed;

fn main() -> taudl::Result<()> {
    for (i, (cameras, per_cam, dim, k, distance)) in [
        (2, 2, 4, 1, DistanceKind::Euclidean),
        (3, 2, 6, 1, DistanceKind::Euclidean),
        (2, 3, 8, 2, DistanceKind::SquaredEuclidean),
    ]
    .into_iter()
    .enumerate()
    {
        let frames_per = 2;
        let n = cameras * per_cam * frames_per;
        let params = init(
            &ModelConfig {
                input_dim: 6,
                hidden_dims: vec![8],
                feature_dim: dim,
                per_camera_classes: vec![per_cam; cameras],
                activation: Default::default(),
                bounded_features: true,
            },
            i as u64,
        )?;
        let mut rng = seed::rng(i as u64, "example-gc", 0);
        let frames = Array2::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
        let samples: Vec<SampleMeta> = (0..n)
            .map(|r| {
                let t = r / frames_per;
                SampleMeta {
                    camera: 1 + t / per_cam,
                    label: 1 + (t % per_cam) as u32,
                    tracklet_id: t as u64,
                }
            })
            .collect();
        let config = LossConfig {
            lambda: 0.7,
            ccta: CctaConfig {
                distance,
                ..CctaConfig::new(k, 2.0)
            },
        };
        let r = check_joint_gradient(&params, &frames, &samples, &config, 1e-5, 1e-6)?;
        println!(
            "T={cameras} tracklets={} D={dim} K={k} {distance:?}: {} partials, max rel error {:.2e} at {}[{}]",
            cameras * per_cam,
            r.num_checked,
            r.max_rel_error,
            r.worst.0,
            r.worst.1
        );
    }
    Ok(())
}
