//! Train all three samplers on the same desk-scale datasets and print the
//! mean test accuracy per strategy.
//!
//! ```text
//! cargo run --release --example compare_strategies -- [sparse|clustered] [seeds] [epochs]
//! ```

use patchmil::experiment::{compare, mean_accuracy};
use patchmil::{ExperimentConfig, Layout, Strategy};

fn main() -> patchmil::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let layout = match args.first().map(String::as_str) {
        Some("clustered") => Layout::Clustered,
        _ => Layout::Sparse,
    };
    let n_seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cfg = ExperimentConfig::desk(layout);
    if let Some(e) = args.get(2).and_then(|s| s.parse().ok()) {
        cfg.epochs = e;
    }
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let reports = compare(&cfg, &seeds, &Strategy::ALL)?;
    for r in &reports {
        let first = r
            .metrics
            .first()
            .and_then(|m| m.truth_hit_rate)
            .unwrap_or(0.0);
        let last = r
            .metrics
            .last()
            .and_then(|m| m.truth_hit_rate)
            .unwrap_or(0.0);
        let curve: Vec<String> = r
            .metrics
            .iter()
            .map(|m| format!("{:.2}", m.test_acc))
            .collect();
        println!(
            "{:<12} seed {} test {:.3} train {:.3} hit {:.3}->{:.3}  [{}]",
            r.strategy.name(),
            r.seed,
            r.test_acc,
            r.metrics.last().map_or(0.0, |m| m.train_acc),
            first,
            last,
            curve.join(" ")
        );
    }
    for (s, acc) in mean_accuracy(&reports) {
        println!("mean {:<12} {acc:.3}", s.name());
    }
    Ok(())
}
