//! Train the patch classifier with one sampling strategy on desk-scale data
//! and write every artifact of the run.
//!
//! ```text
//! cargo run --release --example train_classifier -- [grid|uniform|monte_carlo] [outdir]
//! ```

use patchmil::experiment;
use patchmil::{ExperimentConfig, Layout, Strategy};

fn main() -> patchmil::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strategy: Strategy = args.first().map_or("monte_carlo", String::as_str).parse()?;
    let mut cfg = ExperimentConfig::desk(Layout::Sparse);
    cfg.strategy = strategy;
    cfg.out = Some(args.get(1).cloned().unwrap_or_else(|| "run".into()).into());

    let report = experiment::run(&cfg)?;
    println!("epoch  loss    train  test   hit rate");
    for m in &report.metrics {
        println!(
            "{:>5}  {:.4}  {:.3}  {:.3}  {:.4}",
            m.epoch,
            m.mean_loss,
            m.train_acc,
            m.test_acc,
            m.truth_hit_rate.unwrap_or(0.0)
        );
    }
    println!(
        "{}: final test accuracy {:.3}; artifacts in {}",
        strategy.name(),
        report.test_acc,
        cfg.out.unwrap().display()
    );
    Ok(())
}
