//! Generate a desk-scale dataset and write it as PGM bags, truth masks and
//! a manifest.
//!
//! ```text
//! cargo run --release --example generate_dataset -- [sparse|clustered] [outdir]
//! ```

use patchmil::{generate_dataset, procedural_glyphs, store, Layout, SynthConfig};

fn main() -> patchmil::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let layout = match args.first().map(String::as_str) {
        Some("clustered") => Layout::Clustered,
        _ => Layout::Sparse,
    };
    let out = args.get(1).cloned().unwrap_or_else(|| "data".into());

    let cfg = SynthConfig::desk(layout);
    let glyphs = procedural_glyphs(cfg.seed);
    let data = generate_dataset(&cfg, &glyphs)?;
    store::write_dataset(&out, &data)?;

    let positives = data.train.iter().filter(|b| b.is_positive()).count();
    let target_px: usize = data
        .train
        .iter()
        .filter_map(|b| b.truth_mask.as_ref())
        .map(|m| m.iter().filter(|&&v| v == 1).count())
        .sum();
    println!(
        "{} train bags ({positives} positive), {} test bags, {}x{} px, {} glyphs each",
        data.train.len(),
        data.test.len(),
        cfg.bag_size,
        cfg.bag_size,
        cfg.glyph_count_per_bag
    );
    println!(
        "target pixels cover {:.2}% of positive bags",
        100.0 * target_px as f64 / (positives * cfg.bag_size * cfg.bag_size) as f64
    );
    println!("written to {out}/");
    Ok(())
}
