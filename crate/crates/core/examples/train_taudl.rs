//! Train one model step by step and print the loss trace.
//!
//! cargo run --release --example train_taudl -- [config] [mode]

use taudl::config::RunConfig;
use taudl::eval::{evaluate, EvalMeta};
use taudl::sstt::sstt_label;
use taudl::trainer::{TrainMode, Trainer};
use taudl::world::generate_world;

fn main() -> taudl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = RunConfig::resolve(&args.next().unwrap_or_else(|| "tiny".into()))?;
    if let Some(m) = args.next() {
        config.train.mode = m.parse::<TrainMode>()?;
    }
    let world = generate_world(&config.world)?;
    let dataset = sstt_label(&world, &config.sstt)?.dataset;
    let mut trainer = Trainer::new(&dataset, &config.model, &config.train)?;
    println!(
        "{} parameters, batch {} frames",
        trainer.state.params.num_parameters(),
        config.train.batch_size(dataset.num_cameras())
    );
    let every = (config.train.steps / 10).max(1);
    while !trainer.is_done() {
        let m = trainer.step()?;
        if m.step % every == 0 || trainer.is_done() {
            let ccta = m.ccta.map_or("-".to_string(), |c| format!("{c:.4}"));
            println!("step {:5}  pctd {:.4}  ccta {ccta}  joint {:.4}", m.step, m.pctd, m.joint);
        }
    }
    let r = evaluate(&trainer.state.params, world.test_tracklets(), EvalMeta::default())?;
    println!(
        "rank-1 {:.1}%  (chance {:.1}%)",
        100.0 * r.rank1(),
        100.0 * r.chance_rank1
    );
    Ok(())
}
