//! Ablation and duplication-robustness sweeps.
//!
//! Cells (mode or rate, seed) are independent and run in parallel; results
//! come back in canonical order, so output is identical for any thread count.

use rayon::prelude::*;

use super::{evaluate, write_results_csv, EvalMeta, EvalResult};
use crate::error::Result;
use crate::seed;
use crate::sstt::{duplication_rate, inject_duplication, sstt_label, InjectionReport, SsttConfig};
use crate::trainer::{train, ArchConfig, TrainConfig, TrainMode};
use crate::world::World;

/// Everything a sweep needs besides the swept variable.
#[derive(Clone, Debug)]
pub struct ExperimentSetup<'a> {
    pub world: &'a World,
    pub sstt: SsttConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub mode: TrainMode,
    pub seed: u64,
    pub result: EvalResult,
}

#[derive(Clone, Debug)]
pub struct RobustnessRow {
    pub rate: f64,
    pub seed: u64,
    pub result: EvalResult,
    pub injection: InjectionReport,
    /// Duplication rate measured on the injected dataset.
    pub realized: f64,
    pub label_counts: Vec<usize>,
}

pub fn mean_rank1<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> f64 {
    let (sum, n) = results
        .into_iter()
        .fold((0.0, 0usize), |(s, n), r| (s + r.rank1(), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Train every mode on the same SSTT-labelled data with each seed and
/// evaluate on the held-out identities.
pub fn run_ablation(setup: &ExperimentSetup<'_>, modes: &[TrainMode]) -> Result<Vec<AblationRow>> {
    let dataset = sstt_label(setup.world, &setup.sstt)?.dataset;
    let cells: Vec<(TrainMode, u64)> = modes
        .iter()
        .flat_map(|&m| setup.seeds.iter().map(move |&s| (m, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(mode, seed)| {
            let config = TrainConfig {
                mode,
                seed,
                ..setup.train.clone()
            };
            let state = train(&dataset, &setup.arch, &config)?;
            let result = evaluate(
                &state.params,
                setup.world.test_tracklets(),
                EvalMeta {
                    seed: Some(seed),
                    mode: Some(mode.name().to_string()),
                    duplication_rate: None,
                },
            )?;
            Ok(AblationRow { mode, seed, result })
        })
        .collect()
}

/// Full TAUDL training on SSTT labels with `rate` of each camera's
/// identities given a duplicate label.
pub fn run_robustness(setup: &ExperimentSetup<'_>, rates: &[f64]) -> Result<Vec<RobustnessRow>> {
    let base = sstt_label(setup.world, &setup.sstt)?.dataset;
    let ground_truth = setup.world.ground_truth();
    let cells: Vec<(f64, u64)> = rates
        .iter()
        .flat_map(|&r| setup.seeds.iter().map(move |&s| (r, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(rate, seed)| {
            let (dataset, injection) = inject_duplication(
                &base,
                rate,
                setup.world.train_tracklets(),
                seed::derive(seed, "inject", 0),
            )?;
            let realized = duplication_rate(&dataset, &ground_truth)?.overall;
            let config = TrainConfig {
                mode: TrainMode::Taudl,
                seed,
                ..setup.train.clone()
            };
            let state = train(&dataset, &setup.arch, &config)?;
            let result = evaluate(
                &state.params,
                setup.world.test_tracklets(),
                EvalMeta {
                    seed: Some(seed),
                    mode: Some(TrainMode::Taudl.name().to_string()),
                    duplication_rate: Some(rate),
                },
            )?;
            Ok(RobustnessRow {
                rate,
                seed,
                result,
                injection,
                realized,
                label_counts: dataset.label_counts(),
            })
        })
        .collect()
}

pub fn write_ablation_csv<W: std::io::Write>(w: W, rows: &[AblationRow]) -> Result<()> {
    let table: Vec<(String, Option<u64>, &EvalResult)> = rows
        .iter()
        .map(|r| (r.mode.name().to_string(), Some(r.seed), &r.result))
        .collect();
    write_results_csv(w, "mode", &table)
}

pub fn write_robustness_csv<W: std::io::Write>(w: W, rows: &[RobustnessRow]) -> Result<()> {
    let table: Vec<(String, Option<u64>, &EvalResult)> = rows
        .iter()
        .map(|r| (format!("{}", r.rate), Some(r.seed), &r.result))
        .collect();
    write_results_csv(w, "rate", &table)
}
