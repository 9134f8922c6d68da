//! Train JCC, PCTD-only and TAUDL on one world and compare Rank-1.
//!
//! cargo run --release --example ablation -- [config-name-or-path]

use std::time::Instant;

use taudl::config::RunConfig;
use taudl::eval::{mean_rank1, run_ablation, ExperimentSetup};
use taudl::sstt::{duplication_rate, sstt_label};
use taudl::trainer::TrainMode;
use taudl::world::generate_world;

fn main() -> taudl::Result<()> {
    env_logger::init();
    let name = std::env::args().nth(1).unwrap_or_else(|| "desk".into());
    let config = RunConfig::resolve(&name)?;
    let start = Instant::now();
    let world = generate_world(&config.world)?;
    let labelled = sstt_label(&world, &config.sstt)?;
    let dup = duplication_rate(&labelled.dataset, &world.ground_truth())?;
    println!(
        "world: {} tracklets, labels per camera {:?}, duplication {:.3}",
        world.tracklets.len(),
        labelled.dataset.label_counts(),
        dup.overall
    );
    let setup = ExperimentSetup {
        world: &world,
        sstt: config.sstt.clone(),
        arch: config.model.clone(),
        train: config.train.clone(),
        seeds: config.eval.seeds.clone(),
    };
    let rows = run_ablation(&setup, &TrainMode::ALL)?;
    for mode in TrainMode::ALL {
        let per_seed: Vec<String> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| format!("{:.1}", 100.0 * r.result.rank1()))
            .collect();
        let mean = mean_rank1(rows.iter().filter(|r| r.mode == mode).map(|r| &r.result));
        println!("{:<10} rank1 {:5.1}  seeds [{}]", mode.name(), 100.0 * mean, per_seed.join(", "));
    }
    if let Some(r) = rows.first() {
        println!("chance {:.1}, queries {}", 100.0 * r.result.chance_rank1, r.result.num_queries);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
