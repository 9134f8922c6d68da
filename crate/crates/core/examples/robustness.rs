//! Inject identity duplicates into the SSTT labels and track Rank-1.
//!
//! cargo run --release --example robustness -- [config] [rate,rate,...]

use taudl::config::RunConfig;
use taudl::eval::{mean_rank1, run_robustness, ExperimentSetup};
use taudl::world::generate_world;

fn main() -> taudl::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let config = RunConfig::resolve(&args.next().unwrap_or_else(|| "tiny".into()))?;
    let rates: Vec<f64> = match args.next() {
        Some(list) => list
            .split(',')
            .map(|r| r.parse().map_err(|_| taudl::Error::Config(format!("bad rate {r}"))))
            .collect::<taudl::Result<_>>()?,
        None => config.eval.rates.clone(),
    };
    let world = generate_world(&config.world)?;
    let setup = ExperimentSetup {
        world: &world,
        sstt: config.sstt.clone(),
        arch: config.model.clone(),
        train: config.train.clone(),
        seeds: config.eval.seeds.clone(),
    };
    let rows = run_robustness(&setup, &rates)?;
    for &rate in &rates {
        let cell: Vec<_> = rows.iter().filter(|r| r.rate == rate).collect();
        let realized = cell.iter().map(|r| r.realized).sum::<f64>() / cell.len() as f64;
        println!(
            "rate {rate:.2}  realized {realized:.3}  rank-1 {:.1}%",
            100.0 * mean_rank1(cell.iter().map(|r| &r.result))
        );
    }
    Ok(())
}
