//! End-to-end runs: build or load the data, train, evaluate, export.

use std::path::PathBuf;

use crate::config::{ExperimentConfig, Strategy};
use crate::error::Result;
use crate::export::{self, SummaryRow};
use crate::harness::{self, EpochMetrics};
use crate::model::ClassifierState;
use crate::synth::{self, Dataset};

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data.dir {
        Some(dir) => crate::store::read_dataset(dir),
        None => synth::generate_dataset(&cfg.data.synth, &cfg.data.glyphs()?),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
    pub test_acc: f64,
    pub state: ClassifierState,
}

/// Train on `data` and, when `cfg.out` is set, write the run's artifacts
/// (metrics, focus, traces, probability maps, checkpoint) there.
pub fn run_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunReport> {
    let outcome = harness::train(cfg, &data.train, &data.test)?;
    let test_acc = outcome.metrics.last().map_or(0.0, |m| m.test_acc);
    if let Some(out) = &cfg.out {
        let stride = cfg.eval_grid().stride();
        let maps = data
            .test
            .iter()
            .filter(|b| b.is_positive())
            .take(cfg.map_bags)
            .map(|b| {
                harness::probability_map(&outcome.state, b, cfg.patch_size, stride)
                    .map(|m| (b.id.clone(), m))
            })
            .collect::<Result<Vec<_>>>()?;
        export::export_artifacts(
            out,
            &outcome.metrics,
            &maps,
            &outcome.traces,
            !cfg.sequential,
        )?;
        outcome.state.save(out.join("model.ckpt"))?;
        export::write_text(out.join("config.toml"), &cfg.to_toml_string())?;
    }
    Ok(RunReport {
        strategy: cfg.strategy,
        seed: cfg.seed,
        metrics: outcome.metrics,
        test_acc,
        state: outcome.state,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_on(cfg, &load_data(cfg)?)
}

/// Every strategy on every seed, each seed with its own dataset shared by
/// all strategies. Writes `summary.csv` (and per-run folders) under
/// `cfg.out` when set.
pub fn compare(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    strategies: &[Strategy],
) -> Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    for &seed in seeds {
        let base = cfg.clone().with_seed(seed);
        let data = load_data(&base)?;
        for &strategy in strategies {
            let mut run_cfg = base.clone();
            run_cfg.strategy = strategy;
            run_cfg.out = cfg
                .out
                .as_ref()
                .map(|o| o.join(format!("{}-seed{seed}", strategy.name())));
            reports.push(run_on(&run_cfg, &data)?);
        }
    }
    if let Some(out) = &cfg.out {
        export::write_text(
            out.join("summary.csv"),
            &export::summary_csv(&summary_rows(&reports)),
        )?;
    }
    Ok(reports)
}

pub fn summary_rows(reports: &[RunReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .map(|r| SummaryRow {
            strategy: r.strategy.name().to_string(),
            seed: r.seed,
            test_acc: r.test_acc,
        })
        .collect()
}

/// Mean final test accuracy per strategy, in `Strategy::ALL` order.
pub fn mean_accuracy(reports: &[RunReport]) -> Vec<(Strategy, f64)> {
    Strategy::ALL
        .iter()
        .filter_map(|&s| {
            let accs: Vec<f64> = reports
                .iter()
                .filter(|r| r.strategy == s)
                .map(|r| r.test_acc)
                .collect();
            (!accs.is_empty()).then(|| (s, accs.iter().sum::<f64>() / accs.len() as f64))
        })
        .collect()
}

pub fn default_out() -> PathBuf {
    PathBuf::from("runs")
}
