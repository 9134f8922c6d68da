//! Simulate a camera network and print what it produced.
//!
//! cargo run --release --example generate_world -- [config] [out.jsonl]

use taudl::config::RunConfig;
use taudl::world::{generate_world, load_world, save_world};

fn main() -> taudl::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = RunConfig::resolve(&args.next().unwrap_or_else(|| "tiny".into()))?;
    let world = generate_world(&config.world)?;
    println!(
        "{} cameras, {} identities ({} held out)",
        world.cameras.len(),
        world.identities.len(),
        config.world.num_test_identities
    );
    println!(
        "{} trajectories, {} tracklets, {} frames",
        world.trajectories.len(),
        world.tracklets.len(),
        world.tracklets.iter().map(|t| t.num_frames()).sum::<usize>()
    );
    for cam in 1..=config.world.num_cameras {
        let n = world.tracklets.iter().filter(|t| t.camera_id == cam).count();
        println!("  camera {cam}: {n} tracklets");
    }
    println!(
        "identity separation margin {:.3}, noise bound {:.3}, noise {:.3}",
        world.separation_margin(),
        world.separability_noise_bound(),
        config.world.noise_sigma
    );
    if let Some(out) = args.next() {
        let path = std::path::Path::new(&out);
        save_world(&world, path)?;
        assert_eq!(load_world(path)?, world);
        println!("wrote {out} and {}", path.with_extension("bin").display());
    }
    Ok(())
}
