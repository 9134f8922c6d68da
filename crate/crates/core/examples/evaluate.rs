//! Score an untrained and a trained network on held-out identities and
//! print both CMC tables.
//!
//! cargo run --release --example evaluate -- [config]

use taudl::config::RunConfig;
use taudl::eval::{evaluate, write_results_csv, EvalMeta};
use taudl::sstt::sstt_label;
use taudl::trainer::{train, TrainConfig};
use taudl::world::generate_world;

fn main() -> taudl::Result<()> {
    let config = RunConfig::resolve(&std::env::args().nth(1).unwrap_or_else(|| "tiny".into()))?;
    let world = generate_world(&config.world)?;
    let dataset = sstt_label(&world, &config.sstt)?.dataset;
    let untrained = train(
        &dataset,
        &config.model,
        &TrainConfig {
            steps: 0,
            ..config.train.clone()
        },
    )?;
    let trained = train(&dataset, &config.model, &config.train)?;
    let a = evaluate(&untrained.params, world.test_tracklets(), EvalMeta::default())?;
    let b = evaluate(&trained.params, world.test_tracklets(), EvalMeta::default())?;
    println!(
        "{} queries, mean gallery {:.1}, chance rank-1 {:.2}%",
        b.num_queries,
        b.mean_gallery_size,
        100.0 * b.chance_rank1
    );
    let rows = [("init".to_string(), None, &a), ("trained".to_string(), None, &b)];
    write_results_csv(std::io::stdout(), "model", &rows)?;
    Ok(())
}
