//! Label tracklets with sparse space-time sampling and measure how often an
//! identity ends up with two labels in one camera, across sampling gaps.
//!
//! cargo run --release --example sstt_labelling -- [config]

use taudl::config::RunConfig;
use taudl::sstt::{duplication_rate, sstt_label, SsttConfig};
use taudl::world::{generate_world, WorldConfig};

fn main() -> taudl::Result<()> {
    let config = RunConfig::resolve(&std::env::args().nth(1).unwrap_or_else(|| "desk".into()))?;
    let q = config.world.mean_dwell;
    for (title, world_config) in [
        ("no re-appearance", config.world.clone()),
        (
            "re-appearance p=0.5",
            WorldConfig {
                reappearance: true,
                reappear_prob: 0.5,
                ..config.world.clone()
            },
        ),
    ] {
        let world = generate_world(&world_config)?;
        let truth = world.ground_truth();
        println!("{title}:");
        for p in [q / 2.0, q, 2.0 * q, 4.0 * q] {
            let out = sstt_label(
                &world,
                &SsttConfig {
                    temporal_gap: p,
                    ..config.sstt.clone()
                },
            )?;
            let dup = duplication_rate(&out.dataset, &truth)?;
            println!(
                "  P={p:5.1}  instants {:4}  labels {:?}  duplication {:.3}",
                out.num_instants,
                out.dataset.label_counts(),
                dup.overall
            );
        }
    }
    Ok(())
}
