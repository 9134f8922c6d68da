//! Command-line pipeline: generate, sample, train, eval, ablation,
//! robustness and plot.
//!
//! Every command writes into an output directory (`--out`, else `$TAUDL_OUT`,
//! else `runs`) and leaves a `manifest.<command>.json` listing the resolved
//! config, its hash, the seeds and every file written.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid config or usage,
//! 3 missing or unreadable file, 4 schema, version or hash mismatch,
//! 5 training diverged.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, mean_rank1, run_ablation, run_robustness, write_ablation_csv, write_cmc_csv,
    write_results_csv, write_robustness_csv, EvalMeta, ExperimentSetup, RobustnessRow,
};
use crate::manifest::{file_sha256, RunManifest};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::plot;
use crate::sstt::{duplication_rate, load_dataset, save_dataset, sstt_label, DuplicationReport};
use crate::trainer::{metrics_header, metrics_line, parse_metrics, TrainMode, Trainer};
use crate::world::{generate_world, load_world, save_world};

pub const OUT_ENV: &str = "TAUDL_OUT";

#[derive(Debug, Parser)]
#[command(name = "taudl", version, about = "Tracklet association learning on synthetic camera networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Bundled config name (tiny, desk, stress) or TOML path.
    #[arg(long, default_value = "tiny")]
    pub config: String,
    /// Replace every seed in the config with values derived from this one.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a world and write world.jsonl + world.bin.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Label a world's training tracklets with SSTT.
    Sample {
        #[arg(long)]
        world: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train on a labelled dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// taudl, pctd_only or jcc; overrides the config.
        #[arg(long)]
        mode: Option<TrainMode>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on the held-out identities of a dataset's world.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Row label in results.csv.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, env = OUT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// JCC vs PCTD-only vs TAUDL over the config's seeds.
    Ablation {
        /// Comma-separated modes; all three when absent.
        #[arg(long, value_delimiter = ',')]
        mode: Vec<TrainMode>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank-1 under injected identity duplication.
    Robustness {
        /// Comma-separated duplication rates; the config's when absent.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Render metrics.jsonl, cmc.csv, ablation.csv or robustness.csv as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Output SVG; next to the input when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::resolve(&self.config)?;
        if let Some(seed) = self.seed {
            config.reseed(seed);
        }
        Ok(config)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_config(config: &RunConfig, path: &Path) -> Result<()> {
    let text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    write_file(path, text.as_bytes())
}

fn finish(mut manifest: RunManifest, out: &Path, files: &[(&str, &Path)]) -> Result<PathBuf> {
    for (name, p) in files {
        manifest.record(name, p);
    }
    let path = out.join(format!("manifest.{}.json", manifest.command));
    manifest.write(&path)?;
    Ok(path)
}

pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    create_dir(out)?;
    let world = generate_world(&config.world)?;
    let path = out.join("world.jsonl");
    save_world(&world, &path)?;
    let cfg = out.join("config.toml");
    write_config(config, &cfg)?;
    log::info!(
        "world: {} trajectories, {} tracklets",
        world.trajectories.len(),
        world.tracklets.len()
    );
    let manifest = RunManifest::new("generate", config, vec![config.world.seed])?;
    finish(
        manifest,
        out,
        &[
            ("world", &path),
            ("world_frames", &path.with_extension("bin")),
            ("config", &cfg),
        ],
    )?;
    Ok(path)
}

fn write_duplication_csv(path: &Path, report: &DuplicationReport) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["camera", "duplication_rate"])?;
    for (c, v) in report.per_camera.iter().enumerate() {
        wtr.write_record([(c + 1).to_string(), format!("{v:.6}")])?;
    }
    wtr.write_record(["all".to_string(), format!("{:.6}", report.overall)])?;
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Returns the dataset path and the duplication report.
pub fn cmd_sample(world_path: &Path, config: &RunConfig, out: &Path) -> Result<(PathBuf, DuplicationReport)> {
    create_dir(out)?;
    let world = load_world(world_path)?;
    let outcome = sstt_label(&world, &config.sstt)?;
    let path = out.join("dataset.json");
    save_dataset(&outcome.dataset, Some(&config.sstt), world_path, &path)?;
    let report = duplication_rate(&outcome.dataset, &world.ground_truth())?;
    let dup = out.join("duplication.csv");
    write_duplication_csv(&dup, &report)?;
    log::info!(
        "{} instants, labels per camera {:?}, duplication {:.4}",
        outcome.num_instants,
        outcome.dataset.label_counts(),
        report.overall
    );
    let mut manifest = RunManifest::new("sample", config, vec![])?;
    manifest
        .artifacts
        .insert("world_sha256".into(), file_sha256(world_path)?);
    finish(manifest, out, &[("world", world_path), ("dataset", &path), ("duplication", &dup)])?;
    Ok((path, report))
}

pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

pub fn cmd_train(dataset_path: &Path, config: &RunConfig, mode: Option<TrainMode>, out: &Path) -> Result<TrainOutput> {
    create_dir(out)?;
    let (dataset, _, _) = load_dataset(dataset_path)?;
    let mut train = config.train.clone();
    if let Some(m) = mode {
        train.mode = m;
    }
    let mut trainer = Trainer::new(&dataset, &config.model, &train)?;
    let metrics_path = out.join("metrics.jsonl");
    let file = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics = std::io::BufWriter::new(file);
    let io = |e| Error::io(&metrics_path, e);
    writeln!(metrics, "{}", metrics_header()).map_err(io)?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    let ckpt_dir = out.join("checkpoints");
    while !trainer.is_done() {
        let row = trainer.step()?;
        writeln!(metrics, "{}", metrics_line(&row)?).map_err(io)?;
        let done = trainer.state.step;
        if train.checkpoint_every.is_some_and(|k| k > 0 && done % k == 0) {
            create_dir(&ckpt_dir)?;
            let p = ckpt_dir.join(format!("step_{done:06}.ckpt"));
            save_checkpoint(&trainer.state.params, &p)?;
            files.push((format!("checkpoint_{done}"), p));
        }
        if done % 100 == 0 {
            log::info!("step {done}: joint {:.4}", row.joint);
        }
    }
    metrics.flush().map_err(io)?;
    let checkpoint = out.join("model.ckpt");
    save_checkpoint(&trainer.state.params, &checkpoint)?;
    let resolved = RunConfig {
        train: train.clone(),
        ..config.clone()
    };
    let mut manifest = RunManifest::new("train", &resolved, vec![train.seed])?;
    for (name, p) in &files {
        manifest.record(name, p);
    }
    finish(
        manifest,
        out,
        &[("dataset", dataset_path), ("metrics", &metrics_path), ("checkpoint", &checkpoint)],
    )?;
    Ok(TrainOutput { checkpoint, metrics: metrics_path })
}

/// Returns the results CSV path.
pub fn cmd_eval(checkpoint: &Path, dataset_path: &Path, label: Option<&str>, out: &Path) -> Result<PathBuf> {
    create_dir(out)?;
    let params = load_checkpoint(checkpoint)?;
    let (_, world, _) = load_dataset(dataset_path)?;
    let label = label.unwrap_or("model").to_string();
    let result = evaluate(
        &params,
        world.test_tracklets(),
        EvalMeta {
            mode: Some(label.clone()),
            ..EvalMeta::default()
        },
    )?;
    let results = out.join("results.csv");
    let mut buf = Vec::new();
    write_results_csv(&mut buf, "mode", &[(label, None, &result)])?;
    write_file(&results, &buf)?;
    let cmc = out.join("cmc.csv");
    let mut buf = Vec::new();
    write_cmc_csv(&mut buf, &result)?;
    write_file(&cmc, &buf)?;
    log::info!(
        "rank-1 {:.2}% (chance {:.2}%), mAP {:.2}%",
        100.0 * result.rank1(),
        100.0 * result.chance_rank1,
        100.0 * result.map
    );
    let mut manifest = RunManifest::new("eval", &BTreeMap::from([("checkpoint_sha256", file_sha256(checkpoint)?)]), vec![])?;
    manifest.record("checkpoint", checkpoint);
    finish(manifest, out, &[("dataset", dataset_path), ("results", &results), ("cmc", &cmc)])?;
    Ok(results)
}

fn setup<'a>(config: &RunConfig, world: &'a crate::world::World) -> ExperimentSetup<'a> {
    ExperimentSetup {
        world,
        sstt: config.sstt.clone(),
        arch: config.model.clone(),
        train: config.train.clone(),
        seeds: config.eval.seeds.clone(),
    }
}

pub fn cmd_ablation(config: &RunConfig, modes: &[TrainMode], out: &Path) -> Result<PathBuf> {
    create_dir(out)?;
    let modes: Vec<TrainMode> = if modes.is_empty() { TrainMode::ALL.to_vec() } else { modes.to_vec() };
    let world = generate_world(&config.world)?;
    let rows = run_ablation(&setup(config, &world), &modes)?;
    for m in &modes {
        let mean = mean_rank1(rows.iter().filter(|r| r.mode == *m).map(|r| &r.result));
        log::info!("{:<10} rank-1 {:.2}%", m.name(), 100.0 * mean);
    }
    let path = out.join("ablation.csv");
    let mut buf = Vec::new();
    write_ablation_csv(&mut buf, &rows)?;
    write_file(&path, &buf)?;
    let manifest = RunManifest::new("ablation", config, config.eval.seeds.clone())?;
    finish(manifest, out, &[("results", &path)])?;
    Ok(path)
}

fn write_injection_csv(path: &Path, rows: &[RobustnessRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["rate", "seed", "selected", "added", "shortfall", "realized"])?;
    for r in rows {
        let sum = |v: &[usize]| v.iter().sum::<usize>().to_string();
        wtr.write_record([
            format!("{}", r.rate),
            r.seed.to_string(),
            sum(&r.injection.selected),
            sum(&r.injection.added),
            sum(&r.injection.shortfall),
            format!("{:.6}", r.realized),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_robustness(config: &RunConfig, rates: &[f64], out: &Path) -> Result<PathBuf> {
    create_dir(out)?;
    let rates = if rates.is_empty() { config.eval.rates.clone() } else { rates.to_vec() };
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::Config("rates must lie in [0, 1]".into()));
    }
    let world = generate_world(&config.world)?;
    let rows = run_robustness(&setup(config, &world), &rates)?;
    for &rate in &rates {
        let mean = mean_rank1(rows.iter().filter(|r| r.rate == rate).map(|r| &r.result));
        log::info!("rate {rate}: rank-1 {:.2}%", 100.0 * mean);
    }
    let path = out.join("robustness.csv");
    let mut buf = Vec::new();
    write_robustness_csv(&mut buf, &rows)?;
    write_file(&path, &buf)?;
    let inj = out.join("injection.csv");
    write_injection_csv(&inj, &rows)?;
    let resolved = RunConfig {
        eval: crate::config::SweepConfig {
            rates,
            ..config.eval.clone()
        },
        ..config.clone()
    };
    let manifest = RunManifest::new("robustness", &resolved, config.eval.seeds.clone())?;
    finish(manifest, out, &[("results", &path), ("injection", &inj)])?;
    Ok(path)
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(path.into()),
        _ => Error::Csv(e),
    })?;
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn number(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("expected a number, found {s:?}")))
}

/// Mean of column `col` grouped by the first column, in first-seen order.
fn grouped_means(rows: &[Vec<String>], col: usize) -> Result<Vec<(String, f64)>> {
    let mut groups: Vec<(String, f64, usize)> = Vec::new();
    for r in rows {
        let v = number(r.get(col).ok_or_else(|| Error::Format("short row".into()))?)?;
        match groups.iter_mut().find(|g| g.0 == r[0]) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((r[0].clone(), v, 1)),
        }
    }
    Ok(groups.into_iter().map(|(k, s, n)| (k, s / n as f64)).collect())
}

const RESULT_HEADER: [&str; 6] = ["seed", "rank1", "rank5", "rank10", "rank20", "map"];

pub fn cmd_plot(input: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("svg"));
    if input.extension().is_some_and(|e| e == "jsonl") {
        let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
        plot::loss_curves(&out, &parse_metrics(&text)?)?;
        return Ok(out);
    }
    let (header, rows) = read_csv(input)?;
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    match h.as_slice() {
        ["rank", "cmc"] => {
            let curve = rows.iter().map(|r| number(&r[1])).collect::<Result<Vec<_>>>()?;
            plot::cmc_curves(&out, &[("cmc".into(), curve)])?;
        }
        ["rate", rest @ ..] if rest == RESULT_HEADER => {
            let points = grouped_means(&rows, 2)?
                .into_iter()
                .map(|(k, v)| Ok((number(&k)?, v)))
                .collect::<Result<Vec<_>>>()?;
            plot::rank1_vs_rate(&out, &points)?;
        }
        ["mode", rest @ ..] if rest == RESULT_HEADER => {
            // Rank-1/5/10/20 per mode, averaged over seeds
            let mut curves = Vec::new();
            for (i, (mode, _)) in grouped_means(&rows, 2)?.into_iter().enumerate() {
                let mut points = Vec::new();
                for (col, k) in [(2, 1.0), (3, 5.0), (4, 10.0), (5, 20.0)] {
                    points.push((k, grouped_means(&rows, col)?[i].1));
                }
                curves.push(plot::Series { name: mode, points });
            }
            plot::line_chart(&out, "CMC by mode", "rank", "matching rate (%)", &curves)?;
        }
        _ => {
            return Err(Error::Format(format!(
                "{}: not a metrics, cmc, ablation or robustness file",
                input.display()
            )))
        }
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let path = cmd_generate(&common.resolve()?, &common.out)?;
            println!("{}", path.display());
        }
        Command::Sample { world, common } => {
            let (path, report) = cmd_sample(&world, &common.resolve()?, &common.out)?;
            println!("{} duplication={:.4}", path.display(), report.overall);
        }
        Command::Train { dataset, mode, common } => {
            let out = cmd_train(&dataset, &common.resolve()?, mode, &common.out)?;
            println!("{}", out.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            dataset,
            mode,
            out,
        } => {
            let path = cmd_eval(&checkpoint, &dataset, mode.as_deref(), &out)?;
            print!("{}", fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        Command::Ablation { mode, common } => {
            let path = cmd_ablation(&common.resolve()?, &mode, &common.out)?;
            print!("{}", fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        Command::Robustness { rates, common } => {
            let path = cmd_robustness(&common.resolve()?, &rates, &common.out)?;
            print!("{}", fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        Command::Plot { input, out } => {
            let path = cmd_plot(&input, out.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

/// The single error line printed on failure: `error[<kind>]: <message>`.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", e.kind())
}
